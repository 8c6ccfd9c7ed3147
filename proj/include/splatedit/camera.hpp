// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/math.hpp>

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace splatedit {

/// Pinhole camera. Camera space follows the COLMAP convention: x right, y down, z forward.
/// Pixel (x, y) has its centre at image coordinates (x, y); u = fx * X / Z + cx.
struct Camera {
    std::string name;
    int width  = 0;
    int height = 0;
    double fx  = 1.0;
    double fy  = 1.0;
    double cx  = 0.0;
    double cy  = 0.0;
    Mat3 rotation    = Mat3::Identity(); // world -> camera
    Vec3 translation = Vec3::Zero();

    Vec3
    toCamera(const Vec3 &world) const {
        return rotation * world + translation;
    }
    Vec3
    toWorld(const Vec3 &cam) const {
        return rotation.transpose() * (cam - translation);
    }
    Vec3
    center() const {
        return -rotation.transpose() * translation;
    }
    /// Optical axis (+z of camera space) in world coordinates.
    Vec3
    forward() const {
        return rotation.row(2).transpose();
    }
    /// Image-down direction (+y of camera space) in world coordinates.
    Vec3
    down() const {
        return rotation.row(1).transpose();
    }
    Vec2
    projectCameraPoint(const Vec3 &cam) const {
        return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
    }
    /// World point seen at pixel (u, v) whose camera-space z equals `depth`.
    Vec3
    unproject(double u, double v, double depth) const {
        return toWorld(Vec3((u - cx) / fx * depth, (v - cy) / fy * depth, depth));
    }
    Mat4 worldToCamera() const;

    /// Throws InvalidArgument on bad intrinsics or a non-rotation pose.
    void validate() const;

    /// Camera at `eye` aimed at `target`; `up` fixes roll (image-down is -up projected).
    static Camera lookAt(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width,
                         int height, double fx, double fy, double cx, double cy);
    /// Same, reusing the intrinsics of `intrinsics`.
    static Camera lookAt(const Vec3 &eye, const Vec3 &target, const Vec3 &up,
                         const Camera &intrinsics);
};

/// Builds a camera from a 4x4 world-to-camera matrix. The rotation block is orthonormalized by
/// Gram-Schmidt; a singular block or determinant -1 throws InvalidArgument.
Camera cameraFromMatrix(const Mat4 &worldToCamera);

nlohmann::json cameraToJson(const Camera &camera);
Camera cameraFromJson(const nlohmann::json &j);

std::vector<Camera> loadCameras(const std::filesystem::path &path);
void saveCameras(const std::filesystem::path &path, const std::vector<Camera> &cameras);

} // namespace splatedit
