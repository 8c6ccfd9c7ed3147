// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/parallel.hpp>
#include <splatedit/raster.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace splatedit {

class RenderAccess {
  public:
    static void
    setChunks(BlendRecords &r, std::vector<std::vector<BlendEntry>> chunks) {
        r.mChunks = std::move(chunks);
    }
    static void
    setRange(BlendRecords &r, int x, int y, std::uint32_t chunk, std::uint32_t offset, std::uint32_t count) {
        r.mRanges[static_cast<std::size_t>(y) * r.mWidth + x] = {chunk, offset, count};
    }
};

namespace {

bool
finiteGaussian(const Gaussian &g, int degree) {
    if (!g.position.allFinite() || !g.logScale.allFinite() || !g.rotation.allFinite() ||
        !std::isfinite(g.opacityRaw) || g.rotation.squaredNorm() == 0.0) {
        return false;
    }
    for (int k = 0; k < shCoeffCount(degree); ++k) {
        if (!g.sh[k].allFinite()) {
            return false;
        }
    }
    return std::all_of(g.feature.begin(), g.feature.end(), [](double v) { return std::isfinite(v); });
}

// Sorted, struct-of-arrays view of the visible splats for the inner loop.
struct Visible {
    std::vector<std::uint32_t> index;
    std::vector<double> mx, my, ca, cb, cc, opacity, depth;
    std::vector<Vec3> color;
    std::vector<ObjectId> id;
    std::vector<int> x0, x1, y0, y1; // inclusive pixel rectangle

    void
    reserve(std::size_t n) {
        for (auto *v: {&mx, &my, &ca, &cb, &cc, &opacity, &depth}) {
            v->reserve(n);
        }
        index.reserve(n);
        color.reserve(n);
        id.reserve(n);
    }
    std::size_t
    size() const {
        return index.size();
    }
};

struct PixelIdWeight {
    ObjectId id;
    double weight;
};

} // namespace

std::optional<ProjectedSplat>
project(const Gaussian &g, const Camera &camera, std::uint32_t index) {
    const Vec3 t = camera.toCamera(g.position);
    if (!(t.z() > kNearPlane)) {
        return std::nullopt;
    }
    const double tanFovX = 0.5 * camera.width / camera.fx;
    const double tanFovY = 0.5 * camera.height / camera.fy;
    const double limX    = 1.3 * tanFovX;
    const double limY    = 1.3 * tanFovY;
    const double tz      = t.z();
    const double tx      = std::clamp(t.x() / tz, -limX, limX) * tz;
    const double ty      = std::clamp(t.y() / tz, -limY, limY) * tz;

    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx / tz, 0.0, -camera.fx * tx / (tz * tz), 0.0, camera.fy / tz,
        -camera.fy * ty / (tz * tz);
    const Eigen::Matrix<double, 2, 3> jw = jac * camera.rotation;
    Mat2 cov                             = jw * g.covariance() * jw.transpose();
    cov(0, 0) += kLowPassVariance;
    cov(1, 1) += kLowPassVariance;
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));

    const double det = cov.determinant();
    if (!(det > 0.0)) {
        return std::nullopt;
    }
    ProjectedSplat p;
    p.index  = index;
    p.mean2d = camera.projectCameraPoint(t);
    p.cov2d  = cov;
    p.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    p.depth = tz;

    const double mid    = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda = mid + std::sqrt(std::max(0.0, mid * mid - det));
    p.radius            = static_cast<int>(std::ceil(kFootprintSigmas * std::sqrt(lambda)));

    if (p.mean2d.x() + p.radius < 0.0 || p.mean2d.x() - p.radius > camera.width - 1 ||
        p.mean2d.y() + p.radius < 0.0 || p.mean2d.y() - p.radius > camera.height - 1) {
        return std::nullopt;
    }
    return p;
}

ImageF
RenderOutput::normalizedDepth(double minAlpha) const {
    ImageF out(width, height, 1);
    for (std::size_t i = 0; i < out.pixelCount(); ++i) {
        const double a = alpha.data()[i];
        out.data()[i]  = a > minAlpha ? depth.data()[i] / a : 0.0;
    }
    return out;
}

RenderOutput
render(const GaussianScene &scene, const Camera &camera, const RenderOptions &options) {
    camera.validate();
    const int width  = camera.width;
    const int height = camera.height;
    const std::size_t n = scene.size();

    for (std::size_t i = 0; i < n; ++i) {
        if (!finiteGaussian(scene.gaussians[i], scene.shDegree)) {
            throw RenderError("gaussian " + std::to_string(i) + " has non-finite parameters");
        }
    }

    RenderOutput out;
    out.width  = width;
    out.height = height;
    const unsigned ch = options.channels;
    const bool wantColor   = ch & kColor;
    const bool wantDepth   = ch & kDepth;
    const bool wantFeature = ch & kFeature;
    const bool wantIds     = ch & kIds;
    if (wantColor) {
        out.color = ImageF(width, height, 3);
    }
    if (wantDepth) {
        out.depth = ImageF(width, height, 1);
    }
    if (wantFeature) {
        out.feature = ImageF(width, height, kFeatureDim);
    }
    // Alpha is cheap and needed by the id threshold and depth normalisation.
    out.alpha         = ImageF(width, height, 1);
    out.transmittance = ImageF(width, height, 1, 1.0);
    if (wantIds) {
        out.ids = LabelMap(width, height, 1);
    }
    out.splatOpacity.assign(n, 0.0);
    out.splatColorRaw.assign(n, Vec3::Zero());

    // Projection.
    std::vector<std::optional<ProjectedSplat>> projected(n);
    const std::size_t projChunk = 4096;
    parallelFor((n + projChunk - 1) / projChunk, options.threads, [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * projChunk);
        for (std::size_t i = c * projChunk; i < end; ++i) {
            projected[i] = project(scene.gaussians[i], camera, static_cast<std::uint32_t>(i));
        }
    });

    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (projected[i]) {
            order.push_back(static_cast<std::uint32_t>(i));
        }
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double da = projected[a]->depth, db = projected[b]->depth;
        return da < db || (da == db && a < b);
    });

    const Vec3 eye = camera.center();
    Visible vis;
    vis.reserve(order.size());
    for (const std::uint32_t i: order) {
        const auto &p = *projected[i];
        const auto &g = scene.gaussians[i];
        vis.index.push_back(i);
        vis.mx.push_back(p.mean2d.x());
        vis.my.push_back(p.mean2d.y());
        vis.ca.push_back(p.conic(0, 0));
        vis.cb.push_back(p.conic(0, 1));
        vis.cc.push_back(p.conic(1, 1));
        vis.opacity.push_back(g.opacity());
        vis.depth.push_back(p.depth);
        const Vec3 raw = evalShColor(g, scene.shDegree, g.position - eye);
        vis.color.push_back(raw.cwiseMax(0.0));
        vis.id.push_back(g.objectId.value_or(0));
        vis.x0.push_back(std::max(0, static_cast<int>(std::floor(p.mean2d.x() - p.radius))));
        vis.x1.push_back(std::min(width - 1, static_cast<int>(std::ceil(p.mean2d.x() + p.radius))));
        vis.y0.push_back(std::max(0, static_cast<int>(std::floor(p.mean2d.y() - p.radius))));
        vis.y1.push_back(std::min(height - 1, static_cast<int>(std::ceil(p.mean2d.y() + p.radius))));
        out.splatOpacity[i]  = vis.opacity.back();
        out.splatColorRaw[i] = raw;
    }

    // Binning. Each tile list keeps global depth order because splats are appended in order.
    const int tileW  = options.tileSize > 0 ? options.tileSize : width;
    const int tileH  = options.tileSize > 0 ? options.tileSize : height;
    const int tilesX = (width + tileW - 1) / tileW;
    const int tilesY = (height + tileH - 1) / tileH;
    std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tilesX) * tilesY);
    for (std::uint32_t s = 0; s < vis.size(); ++s) {
        for (int ty = vis.y0[s] / tileH; ty <= vis.y1[s] / tileH; ++ty) {
            for (int tx = vis.x0[s] / tileW; tx <= vis.x1[s] / tileW; ++tx) {
                tiles[static_cast<std::size_t>(ty) * tilesX + tx].push_back(s);
            }
        }
    }

    const bool keep = options.keepBlendRecords;
    std::vector<std::vector<BlendEntry>> chunks(keep ? tiles.size() : 0);
    if (keep) {
        out.records.emplace(width, height);
    }
    const Vec3 bg = scene.background;

    parallelFor(tiles.size(), options.threads, [&](std::size_t t) {
        const auto &list = tiles[t];
        const int tx     = static_cast<int>(t % tilesX);
        const int ty     = static_cast<int>(t / tilesX);
        std::vector<PixelIdWeight> idWeights;
        std::vector<BlendEntry> *chunk = keep ? &chunks[t] : nullptr;

        for (int y = ty * tileH; y < std::min(height, (ty + 1) * tileH); ++y) {
            for (int x = tx * tileW; x < std::min(width, (tx + 1) * tileW); ++x) {
                double T = 1.0;
                Vec3 c   = Vec3::Zero();
                double d = 0.0;
                double *f = wantFeature ? &out.feature.at(x, y) : nullptr;
                idWeights.clear();
                const std::size_t start = chunk ? chunk->size() : 0;

                for (const std::uint32_t s: list) {
                    if (x < vis.x0[s] || x > vis.x1[s] || y < vis.y0[s] || y > vis.y1[s]) {
                        continue;
                    }
                    const double dx    = x - vis.mx[s];
                    const double dy    = y - vis.my[s];
                    const double power = -0.5 * (vis.ca[s] * dx * dx + vis.cc[s] * dy * dy) - vis.cb[s] * dx * dy;
                    if (power < -0.5 * kFootprintSigmas * kFootprintSigmas) {
                        continue;
                    }
                    const double falloff = std::exp(power);
                    const double alpha   = std::min(kMaxAlpha, vis.opacity[s] * falloff);
                    const double next    = T * (1.0 - alpha);
                    if (next < kMinTransmittance) {
                        break;
                    }
                    const double w = alpha * T;
                    if (wantColor) {
                        c += w * vis.color[s];
                    }
                    if (wantDepth) {
                        d += w * vis.depth[s];
                    }
                    if (f) {
                        const auto &feat = scene.gaussians[vis.index[s]].feature;
                        for (int k = 0; k < kFeatureDim; ++k) {
                            f[k] += w * feat[k];
                        }
                    }
                    if (wantIds) {
                        auto it = std::find_if(idWeights.begin(), idWeights.end(),
                                               [&](const PixelIdWeight &p) { return p.id == vis.id[s]; });
                        if (it == idWeights.end()) {
                            idWeights.push_back({vis.id[s], w});
                        } else {
                            it->weight += w;
                        }
                    }
                    if (chunk) {
                        chunk->push_back({vis.index[s], alpha, T, w, falloff});
                    }
                    T = next;
                }

                out.transmittance.at(x, y) = T;
                out.alpha.at(x, y)         = 1.0 - T;
                if (wantColor) {
                    c += T * bg;
                    for (int k = 0; k < 3; ++k) {
                        out.color.at(x, y, k) = c[k];
                    }
                }
                if (wantDepth) {
                    out.depth.at(x, y) = d;
                }
                if (wantIds && 1.0 - T >= kIdAlphaThreshold) {
                    ObjectId best     = 0;
                    double bestWeight = -1.0;
                    for (const auto &p: idWeights) {
                        if (p.weight > bestWeight || (p.weight == bestWeight && p.id < best)) {
                            best       = p.id;
                            bestWeight = p.weight;
                        }
                    }
                    out.ids.at(x, y) = best;
                }
                if (chunk) {
                    RenderAccess::setRange(*out.records, x, y, static_cast<std::uint32_t>(t),
                                           static_cast<std::uint32_t>(start),
                                           static_cast<std::uint32_t>(chunk->size() - start));
                }
            }
        }
    });

    if (keep) {
        RenderAccess::setChunks(*out.records, std::move(chunks));
    }
    return out;
}

std::vector<Feature>
backwardFeatures(const GaussianScene &scene, const RenderOutput &out, const ImageF &dLdF) {
    if (!out.records) {
        throw InvalidArgument("backwardFeatures needs a render with blend records");
    }
    if (dLdF.width() != out.width || dLdF.height() != out.height || dLdF.channels() != kFeatureDim) {
        throw InvalidArgument("dL/dF must be H x W x 16 matching the render");
    }
    std::vector<Feature> grad(scene.size(), Feature{});
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const double *g = &dLdF.at(x, y);
            for (const auto &e: out.records->pixel(x, y)) {
                auto &dst = grad[e.splat];
                for (int k = 0; k < kFeatureDim; ++k) {
                    dst[k] += e.weight * g[k];
                }
            }
        }
    }
    return grad;
}

AppearanceGradients
backwardAppearance(const GaussianScene &scene, const RenderOutput &out, const ImageF &dLdC) {
    if (!out.records) {
        throw InvalidArgument("backwardAppearance needs a render with blend records");
    }
    if (dLdC.width() != out.width || dLdC.height() != out.height || dLdC.channels() != 3) {
        throw InvalidArgument("dL/dC must be H x W x 3 matching the render");
    }
    const std::size_t n = scene.size();
    AppearanceGradients grad;
    grad.color.assign(n, Vec3::Zero());
    grad.shDc.assign(n, Vec3::Zero());
    grad.opacityRaw.assign(n, 0.0);
    std::vector<double> dOpacity(n, 0.0);
    const Vec3 bg = scene.background;

    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const Vec3 g(dLdC.at(x, y, 0), dLdC.at(x, y, 1), dLdC.at(x, y, 2));
            const auto entries = out.records->pixel(x, y);
            // suffix = g . (sum_{j>i} c_j w_j + T_N * bg), accumulated back to front.
            double suffix = out.transmittance.at(x, y) * bg.dot(g);
            for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
                const Vec3 c   = out.splatColorRaw[it->splat].cwiseMax(0.0);
                const double cg = c.dot(g);
                grad.color[it->splat] += it->weight * g;
                const double dAlpha = it->transmittance * cg - suffix / (1.0 - it->alpha);
                const double o      = out.splatOpacity[it->splat];
                if (o * it->falloff < kMaxAlpha) {
                    dOpacity[it->splat] += dAlpha * it->falloff;
                }
                suffix += it->weight * cg;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double o     = out.splatOpacity[i];
        grad.opacityRaw[i] = dOpacity[i] * o * (1.0 - o);
        for (int k = 0; k < 3; ++k) {
            grad.shDc[i][k] = out.splatColorRaw[i][k] > 0.0 ? kShC0 * grad.color[i][k] : 0.0;
        }
    }
    return grad;
}

} // namespace splatedit
