// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/camera.hpp>
#include <splatedit/error.hpp>

#include <nlohmann/json.hpp>

#include <fstream>

namespace splatedit {

Mat4
Camera::worldToCamera() const {
    Mat4 m                  = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

void
Camera::validate() const {
    if (width <= 0 || height <= 0) {
        throw InvalidArgument("camera '" + name + "': image size must be positive");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw InvalidArgument("camera '" + name + "': focal lengths must be positive");
    }
    if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
        throw InvalidArgument("camera '" + name + "': principal point outside the image");
    }
    if (!rotation.allFinite() || !translation.allFinite() ||
        (rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-9 ||
        rotation.determinant() < 0.0) {
        throw InvalidArgument("camera '" + name + "': pose is not a proper rotation");
    }
}

Camera
Camera::lookAt(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width, int height,
               double fx, double fy, double cx, double cy) {
    const Vec3 z = (target - eye).normalized();
    Vec3 y       = -(up - up.dot(z) * z);
    if (y.norm() < 1e-12) {
        // up is parallel to the view direction; pick any perpendicular.
        y = z.unitOrthogonal();
    }
    y.normalize();
    const Vec3 x = y.cross(z);

    Camera cam;
    cam.width  = width;
    cam.height = height;
    cam.fx     = fx;
    cam.fy     = fy;
    cam.cx     = cx;
    cam.cy     = cy;
    cam.rotation.row(0) = x.transpose();
    cam.rotation.row(1) = y.transpose();
    cam.rotation.row(2) = z.transpose();
    cam.translation     = -cam.rotation * eye;
    return cam;
}

Camera
Camera::lookAt(const Vec3 &eye, const Vec3 &target, const Vec3 &up, const Camera &intrinsics) {
    return lookAt(eye, target, up, intrinsics.width, intrinsics.height, intrinsics.fx,
                  intrinsics.fy, intrinsics.cx, intrinsics.cy);
}

Camera
cameraFromMatrix(const Mat4 &m) {
    if (!m.allFinite()) {
        throw InvalidArgument("pose contains non-finite values");
    }
    if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-9) {
        throw InvalidArgument("pose bottom row must be (0, 0, 0, 1)");
    }
    Mat3 r = m.topLeftCorner<3, 3>();
    // Gram-Schmidt on the rows.
    for (int i = 0; i < 3; ++i) {
        Vec3 v = r.row(i).transpose();
        for (int j = 0; j < i; ++j) {
            v -= v.dot(r.row(j).transpose()) * r.row(j).transpose();
        }
        const double n = v.norm();
        if (n < 1e-9) {
            throw InvalidArgument("pose rotation block is singular (non-invertible pose)");
        }
        r.row(i) = (v / n).transpose();
    }
    if (r.determinant() < 0.0) {
        throw InvalidArgument("pose rotation has determinant -1 (reflection)");
    }
    Camera cam;
    cam.rotation    = r;
    cam.translation = m.topRightCorner<3, 1>();
    return cam;
}

nlohmann::json
cameraToJson(const Camera &c) {
    nlohmann::json pose = nlohmann::json::array();
    const Mat4 m        = c.worldToCamera();
    for (int i = 0; i < 4; ++i) {
        pose.push_back({m(i, 0), m(i, 1), m(i, 2), m(i, 3)});
    }
    return {{"name", c.name}, {"width", c.width}, {"height", c.height}, {"fx", c.fx},
            {"fy", c.fy},     {"cx", c.cx},       {"cy", c.cy},         {"world_to_camera", pose}};
}

Camera
cameraFromJson(const nlohmann::json &j) {
    try {
        Mat4 m;
        const auto &pose = j.at("world_to_camera");
        if (!pose.is_array() || pose.size() != 4) {
            throw InvalidArgument("world_to_camera must be a 4x4 array");
        }
        for (int i = 0; i < 4; ++i) {
            if (!pose[i].is_array() || pose[i].size() != 4) {
                throw InvalidArgument("world_to_camera must be a 4x4 array");
            }
            for (int k = 0; k < 4; ++k) {
                m(i, k) = pose[i][k].get<double>();
            }
        }
        Camera cam = cameraFromMatrix(m);
        cam.name   = j.value("name", std::string{});
        cam.width  = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.fx     = j.at("fx").get<double>();
        cam.fy     = j.at("fy").get<double>();
        cam.cx     = j.at("cx").get<double>();
        cam.cy     = j.at("cy").get<double>();
        cam.validate();
        return cam;
    } catch (const nlohmann::json::exception &e) {
        throw InvalidArgument(std::string("malformed camera entry: ") + e.what());
    }
}

std::vector<Camera>
loadCameras(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open cameras file " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw LoadError("cameras file " + path.string() + ": " + e.what());
    }
    if (doc.contains("convention") && doc["convention"] != "colmap") {
        throw LoadError("cameras file " + path.string() + ": only the colmap convention is supported");
    }
    const auto &list = doc.is_array() ? doc : doc.at("cameras");
    std::vector<Camera> cameras;
    for (std::size_t i = 0; i < list.size(); ++i) {
        try {
            cameras.push_back(cameraFromJson(list[i]));
        } catch (const Error &e) {
            throw LoadError("cameras file " + path.string() + ", camera " + std::to_string(i) +
                            ": " + e.what());
        }
    }
    return cameras;
}

void
saveCameras(const std::filesystem::path &path, const std::vector<Camera> &cameras) {
    nlohmann::json doc;
    doc["convention"] = "colmap";
    doc["cameras"]    = nlohmann::json::array();
    for (const auto &c: cameras) {
        doc["cameras"].push_back(cameraToJson(c));
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write cameras file " + path.string());
    }
    out << doc.dump(2) << '\n';
}

} // namespace splatedit
