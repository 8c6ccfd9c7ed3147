// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace splatedit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline double
sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

inline double
logit(double p) {
    return std::log(p / (1.0 - p));
}

// Rotation matrix from a (w, x, y, z) quaternion. The input need not be normalized.
inline Mat3
rotationFromQuaternion(const Vec4 &wxyz) {
    const Vec4 q = wxyz.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

} // namespace splatedit
