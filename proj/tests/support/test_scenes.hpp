// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Random scene generators and numeric helpers shared by the unit and acceptance suites.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/image.hpp>
#include <splatedit/scene.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace splatedit::testing {

inline Camera
makeCamera(int width, int height, double focal, const Vec3 &eye = Vec3::Zero(),
           const Vec3 &target = Vec3(0, 0, 1), const Vec3 &up = Vec3(0, -1, 0)) {
    return Camera::lookAt(eye, target, up, width, height, focal, focal, 0.5 * (width - 1), 0.5 * (height - 1));
}

inline Vec4
randomQuaternion(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

/// Splats scattered in a frustum in front of `camera`-like geometry looking down +z from the
/// origin, with random anisotropic shapes, opacities, colours, features and ids.
inline GaussianScene
randomScene(std::mt19937_64 &rng, int count, int shDegree = 0, double maxLogitOpacity = 3.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    GaussianScene scene;
    scene.shDegree   = shDegree;
    scene.background = Vec3(u(rng), u(rng), u(rng));
    for (int i = 0; i < count; ++i) {
        Gaussian g;
        const double z = 2.0 + 3.0 * u(rng);
        g.position     = Vec3((u(rng) - 0.5) * 0.8 * z, (u(rng) - 0.5) * 0.6 * z, z);
        g.logScale     = Vec3(std::log(0.03 + 0.15 * u(rng)), std::log(0.03 + 0.15 * u(rng)),
                              std::log(0.03 + 0.15 * u(rng)));
        g.rotation     = randomQuaternion(rng);
        g.opacityRaw   = (2.0 * u(rng) - 1.0) * maxLogitOpacity;
        g.setBaseColor(Vec3(u(rng), u(rng), u(rng)));
        for (int k = 1; k < shCoeffCount(shDegree); ++k) {
            g.sh[k] = 0.1 * Vec3(n(rng), n(rng), n(rng));
        }
        for (auto &f: g.feature) {
            f = n(rng);
        }
        g.objectId = static_cast<ObjectId>(1 + i % 3);
        scene.gaussians.push_back(g);
    }
    return scene;
}

/// Moves every segment boundary of a label map by a smoothly varying offset in [-amplitude,
/// amplitude] pixels: positive offsets grow the segment, negative ones shrink it.
inline LabelMap
jitterBoundaries(const LabelMap &labels, double amplitude, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fx = 2.0 * 3.141592653589793 / (12.0 + 12.0 * u(rng));
    const double fy = 2.0 * 3.141592653589793 / (12.0 + 12.0 * u(rng));
    const double px = 6.283185307179586 * u(rng), py = 6.283185307179586 * u(rng);
    const int reach = static_cast<int>(std::ceil(amplitude));
    LabelMap out(labels.width(), labels.height(), 1);
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const double r   = amplitude * std::sin(fx * x + px) * std::cos(fy * y + py);
            const auto own   = labels.at(x, y);
            auto result      = own;
            double bestDist2 = r * r + 1e-9;
            for (int dy = -reach; dy <= reach; ++dy) {
                for (int dx = -reach; dx <= reach; ++dx) {
                    const int qx = x + dx, qy = y + dy;
                    const double d2 = dx * dx + dy * dy;
                    if (!labels.contains(qx, qy) || d2 > bestDist2) {
                        continue;
                    }
                    const auto other = labels.at(qx, qy);
                    if (r > 0.0 && own == 0 && other != 0) {
                        result    = other;
                        bestDist2 = d2;
                    } else if (r < 0.0 && own != 0 && other != own) {
                        result = 0;
                    }
                }
            }
            out.at(x, y) = result;
        }
    }
    return out;
}

/// Predicted id -> ground-truth id by majority vote over labelled ground-truth pixels. Unmapped
/// predictions (and 0) map to 0.
inline std::map<std::uint16_t, std::uint16_t>
majorityMapping(const std::vector<LabelMap> &predicted, const std::vector<LabelMap> &truth) {
    std::map<std::pair<std::uint16_t, std::uint16_t>, std::size_t> counts;
    for (std::size_t v = 0; v < predicted.size(); ++v) {
        for (std::size_t p = 0; p < truth[v].pixelCount(); ++p) {
            if (predicted[v].data()[p] != 0 && truth[v].data()[p] != 0) {
                ++counts[{predicted[v].data()[p], truth[v].data()[p]}];
            }
        }
    }
    std::map<std::uint16_t, std::pair<std::uint16_t, std::size_t>> best;
    for (const auto &[key, n]: counts) {
        auto &b = best[key.first];
        if (n > b.second) {
            b = {key.second, n};
        }
    }
    std::map<std::uint16_t, std::uint16_t> out;
    for (const auto &[pred, b]: best) {
        out[pred] = b.first;
    }
    return out;
}

/// Fraction of pixels whose mapped predicted label equals the ground truth (background included).
inline double
labelAgreement(const LabelMap &predicted, const LabelMap &truth, const std::map<std::uint16_t, std::uint16_t> &mapping) {
    std::size_t same = 0;
    for (std::size_t p = 0; p < truth.pixelCount(); ++p) {
        const auto it           = mapping.find(predicted.data()[p]);
        const std::uint16_t got = it == mapping.end() ? 0 : it->second;
        same += got == truth.data()[p];
    }
    return static_cast<double>(same) / static_cast<double>(truth.pixelCount());
}

/// Relative error with an absolute floor so entries that are both ~0 compare as equal.
inline double
relativeError(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite difference of f around the current value of `param`.
inline double
centralDifference(double &param, double h, const std::function<double()> &f) {
    const double saved = param;
    param              = saved + h;
    const double plus  = f();
    param              = saved - h;
    const double minus = f();
    param              = saved;
    return (plus - minus) / (2.0 * h);
}

/// Mean absolute colour difference between consecutive views: masked pixels of view t are lifted
/// through their depth and compared with the nearest pixel of view t+1 when that one is masked too.
inline double
crossViewConsistency(const std::vector<Camera> &cameras, const std::vector<ImageF> &colors,
                     const std::vector<ImageF> &depths, const std::vector<Mask> &masks) {
    double sum        = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t + 1 < cameras.size(); ++t) {
        const Camera &a = cameras[t], &b = cameras[t + 1];
        for (int y = 0; y < a.height; ++y) {
            for (int x = 0; x < a.width; ++x) {
                const double d = depths[t].at(x, y);
                if (!masks[t].at(x, y) || !(d > 0.0)) {
                    continue;
                }
                const Vec3 world = a.center() + a.rotation.transpose() *
                                                    Vec3((x - a.cx) / a.fx * d, (y - a.cy) / a.fy * d, d);
                const Vec3 pc    = b.rotation * world + b.translation;
                if (!(pc.z() > 0.0)) {
                    continue;
                }
                const long u = std::lround(b.fx * pc.x() / pc.z() + b.cx);
                const long v = std::lround(b.fy * pc.y() / pc.z() + b.cy);
                if (u < 0 || v < 0 || u >= b.width || v >= b.height || !masks[t + 1].at(u, v)) {
                    continue;
                }
                for (int c = 0; c < 3; ++c) {
                    sum += std::abs(colors[t].at(x, y, c) - colors[t + 1].at(u, v, c));
                }
                count += 3;
            }
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

inline ImageF
randomImage(std::mt19937_64 &rng, int w, int h, int c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageF img(w, h, c);
    for (auto &v: img.data()) {
        v = u(rng);
    }
    return img;
}

// Direct 2-D evaluation of the windowed statistics at every pixel.
inline double
oracleSsim(const ImageF &a, const ImageF &b) {
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double total    = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int y = 0; y < a.height(); ++y) {
            for (int x = 0; x < a.width(); ++x) {
                double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -5; dy <= 5; ++dy) {
                    for (int dx = -5; dx <= 5; ++dx) {
                        if (!a.contains(x + dx, y + dy)) {
                            continue;
                        }
                        const double w  = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                        const double va = a.at(x + dx, y + dy, c), vb = b.at(x + dx, y + dy, c);
                        wsum += w;
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                ma /= wsum;
                mb /= wsum;
                const double va = saa / wsum - ma * ma, vb = sbb / wsum - mb * mb, cov = sab / wsum - ma * mb;
                total += (2 * ma * mb + C1) * (2 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            }
        }
    }
    return total / (a.pixelCount() * a.channels());
}

class TempDir {
  public:
    explicit TempDir(const std::string &tag) {
        std::random_device rd;
        mPath = std::filesystem::temp_directory_path() /
                ("splatedit_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(mPath);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(mPath, ec);
    }
    TempDir(const TempDir &)            = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &
    path() const {
        return mPath;
    }
    std::filesystem::path
    operator/(const std::string &name) const {
        return mPath / name;
    }

  private:
    std::filesystem::path mPath;
};

} // namespace splatedit::testing
