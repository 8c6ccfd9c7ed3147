// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/math.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace splatedit {

inline constexpr int kFeatureDim  = 16;
inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);
/// Upper bound on classifier classes, background slot 0 included.
inline constexpr int kMaxClasses = 256;
/// Largest object id the key object database hands out (slot 0 is background).
inline constexpr int kMaxObjectId = kMaxClasses - 1;
inline constexpr double kShC0     = 0.28209479177387814;

using Feature = std::array<double, kFeatureDim>;
using ObjectId = std::uint16_t;

inline constexpr int
shCoeffCount(int degree) {
    return (degree + 1) * (degree + 1);
}

/// One splat. Fields hold raw (pre-activation) values exactly as stored on disk.
struct Gaussian {
    Vec3 position = Vec3::Zero();
    Vec3 logScale = Vec3::Zero();
    Vec4 rotation{1.0, 0.0, 0.0, 0.0}; // (w, x, y, z)
    double opacityRaw = 0.0;
    std::array<Vec3, kMaxShCoeffs> sh{}; // sh[0] is the DC term, one RGB triple per coefficient
    Feature feature{};
    std::optional<ObjectId> objectId;

    Gaussian() {
        for (auto &c: sh) {
            c.setZero();
        }
    }

    Vec3
    scale() const {
        return logScale.array().exp();
    }
    double
    opacity() const {
        return sigmoid(opacityRaw);
    }
    Mat3 covariance() const;

    /// DC colour term before view-dependent bands: C0 * sh[0] + 0.5.
    Vec3
    baseColor() const {
        return kShC0 * sh[0] + Vec3::Constant(0.5);
    }
    void
    setBaseColor(const Vec3 &rgb) {
        sh[0] = (rgb - Vec3::Constant(0.5)) / kShC0;
    }
};

/// Linear identity classifier: logits = weight * f + bias, weight is Q x 16.
struct Classifier {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;

    int
    classes() const {
        return static_cast<int>(weight.rows());
    }
    /// Argmax class of a single feature vector, ties to the smaller class.
    int predict(const Feature &f) const;
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    int shDegree    = 0;
    Vec3 background = Vec3::Zero();
    std::optional<Classifier> classifier;

    std::size_t
    size() const noexcept {
        return gaussians.size();
    }
    bool
    hasIdentity() const;

    /// Throws InvalidArgument when an invariant is broken (non-finite values, bad SH degree,
    /// classifier shape, object id outside the classifier range).
    void validate() const;

    /// Object ids in use, ascending, with member counts.
    std::vector<std::pair<ObjectId, std::size_t>> objectCounts() const;
};

/// View-dependent colour from SH coefficients, `dir` from camera centre to splat. Returns the
/// value before the non-negativity clamp; callers apply max(0, .) per channel.
Vec3 evalShColor(const Gaussian &g, int degree, const Vec3 &dir);

/// Field-by-field bit equality of raw values (distinguishes -0.0 from 0.0, NaN payloads).
bool bitwiseEqual(const Gaussian &a, const Gaussian &b);
bool bitwiseEqual(const GaussianScene &a, const GaussianScene &b);

} // namespace splatedit
