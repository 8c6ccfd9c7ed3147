// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/scene.hpp>

#include <cmath>
#include <cstring>
#include <map>
#include <string>

namespace splatedit {

namespace {

bool
allFinite(const Gaussian &g) {
    if (!g.position.allFinite() || !g.logScale.allFinite() || !g.rotation.allFinite() ||
        !std::isfinite(g.opacityRaw)) {
        return false;
    }
    for (const auto &c: g.sh) {
        if (!c.allFinite()) {
            return false;
        }
    }
    for (const double v: g.feature) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

template <typename T>
bool
sameBits(const T &a, const T &b) {
    return std::memcmp(&a, &b, sizeof(T)) == 0;
}

bool
sameBits(const double *a, const double *b, std::size_t n) {
    return std::memcmp(a, b, n * sizeof(double)) == 0;
}

} // namespace

Mat3
Gaussian::covariance() const {
    const Mat3 r = rotationFromQuaternion(rotation);
    const Mat3 m = r * scale().asDiagonal();
    return m * m.transpose();
}

int
Classifier::predict(const Feature &f) const {
    const Eigen::Map<const Eigen::VectorXd> fv(f.data(), kFeatureDim);
    const Eigen::VectorXd logits = weight * fv + bias;
    int best = 0;
    for (int q = 1; q < logits.size(); ++q) {
        if (logits[q] > logits[best]) {
            best = q;
        }
    }
    return best;
}

bool
GaussianScene::hasIdentity() const {
    if (classifier) {
        return true;
    }
    for (const auto &g: gaussians) {
        if (g.objectId) {
            return true;
        }
        for (const double v: g.feature) {
            if (v != 0.0) {
                return true;
            }
        }
    }
    return false;
}

void
GaussianScene::validate() const {
    if (shDegree < 0 || shDegree > kMaxShDegree) {
        throw InvalidArgument("sh degree " + std::to_string(shDegree) + " outside [0, 3]");
    }
    if (!background.allFinite() || background.minCoeff() < 0.0 || background.maxCoeff() > 1.0) {
        throw InvalidArgument("background colour must lie in [0, 1]");
    }
    if (classifier) {
        const int q = classifier->classes();
        if (q < 1 || q > kMaxClasses || classifier->weight.cols() != kFeatureDim ||
            classifier->bias.size() != q) {
            throw InvalidArgument("classifier must be Q x 16 with Q <= 256 and a Q-vector bias");
        }
    }
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto &g = gaussians[i];
        if (!allFinite(g)) {
            throw InvalidArgument("gaussian " + std::to_string(i) + " has non-finite parameters");
        }
        if (g.rotation.norm() == 0.0) {
            throw InvalidArgument("gaussian " + std::to_string(i) + " has a zero quaternion");
        }
        if (classifier && g.objectId && *g.objectId >= classifier->classes()) {
            throw InvalidArgument("gaussian " + std::to_string(i) + " has object id " +
                                  std::to_string(*g.objectId) + " >= class count");
        }
    }
}

std::vector<std::pair<ObjectId, std::size_t>>
GaussianScene::objectCounts() const {
    std::map<ObjectId, std::size_t> counts;
    for (const auto &g: gaussians) {
        if (g.objectId && *g.objectId != 0) {
            ++counts[*g.objectId];
        }
    }
    return {counts.begin(), counts.end()};
}

Vec3
evalShColor(const Gaussian &g, int degree, const Vec3 &dir) {
    constexpr double c1   = 0.4886025119029199;
    constexpr double c2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                             -1.0925484305920792, 0.5462742152960396};
    constexpr double c3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                             0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                             -0.5900435899266435};
    const auto &sh = g.sh;
    Vec3 result    = kShC0 * sh[0];
    if (degree > 0) {
        const Vec3 d   = dir.normalized();
        const double x = d.x(), y = d.y(), z = d.z();
        result += -c1 * y * sh[1] + c1 * z * sh[2] - c1 * x * sh[3];
        if (degree > 1) {
            const double xx = x * x, yy = y * y, zz = z * z;
            const double xy = x * y, yz = y * z, xz = x * z;
            result += c2[0] * xy * sh[4] + c2[1] * yz * sh[5] + c2[2] * (2 * zz - xx - yy) * sh[6] +
                      c2[3] * xz * sh[7] + c2[4] * (xx - yy) * sh[8];
            if (degree > 2) {
                result += c3[0] * y * (3 * xx - yy) * sh[9] + c3[1] * xy * z * sh[10] +
                          c3[2] * y * (4 * zz - xx - yy) * sh[11] +
                          c3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[12] +
                          c3[4] * x * (4 * zz - xx - yy) * sh[13] + c3[5] * z * (xx - yy) * sh[14] +
                          c3[6] * x * (xx - 3 * yy) * sh[15];
            }
        }
    }
    return result + Vec3::Constant(0.5);
}

bool
bitwiseEqual(const Gaussian &a, const Gaussian &b) {
    if (!sameBits(a.position.data(), b.position.data(), 3) ||
        !sameBits(a.logScale.data(), b.logScale.data(), 3) ||
        !sameBits(a.rotation.data(), b.rotation.data(), 4) || !sameBits(a.opacityRaw, b.opacityRaw) ||
        !sameBits(a.feature.data(), b.feature.data(), kFeatureDim) || a.objectId != b.objectId) {
        return false;
    }
    for (int k = 0; k < kMaxShCoeffs; ++k) {
        if (!sameBits(a.sh[k].data(), b.sh[k].data(), 3)) {
            return false;
        }
    }
    return true;
}

bool
bitwiseEqual(const GaussianScene &a, const GaussianScene &b) {
    if (a.size() != b.size() || a.shDegree != b.shDegree ||
        !sameBits(a.background.data(), b.background.data(), 3) ||
        a.classifier.has_value() != b.classifier.has_value()) {
        return false;
    }
    if (a.classifier) {
        const auto &ca = *a.classifier;
        const auto &cb = *b.classifier;
        if (ca.weight.rows() != cb.weight.rows() || ca.weight.cols() != cb.weight.cols() ||
            ca.bias.size() != cb.bias.size() ||
            !sameBits(ca.weight.data(), cb.weight.data(), ca.weight.size()) ||
            !sameBits(ca.bias.data(), cb.bias.data(), ca.bias.size())) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!bitwiseEqual(a.gaussians[i], b.gaussians[i])) {
            return false;
        }
    }
    return true;
}

} // namespace splatedit
