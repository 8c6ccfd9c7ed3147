// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/image.hpp>
#include <splatedit/scene.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace splatedit {

inline constexpr double kNearPlane         = 0.2;
inline constexpr double kLowPassVariance   = 0.3;
inline constexpr double kMaxAlpha          = 0.99;
inline constexpr double kMinTransmittance  = 1e-4;
/// A splat touches a pixel when the pixel lies inside its 3-sigma ellipse.
inline constexpr double kFootprintSigmas   = 3.0;
inline constexpr double kIdAlphaThreshold  = 0.5;
inline constexpr int kDefaultTileSize      = 16;

/// Screen-space footprint of one splat.
struct ProjectedSplat {
    std::uint32_t index = 0;
    Vec2 mean2d;
    Mat2 cov2d; // includes the low-pass term
    Mat2 conic; // inverse of cov2d
    double depth = 0.0;
    int radius   = 0;
};

/// EWA projection with the 3DGS affine approximation. Returns nullopt when the splat is behind
/// the near plane or its footprint misses the image.
std::optional<ProjectedSplat> project(const Gaussian &g, const Camera &camera, std::uint32_t index = 0);

enum RenderChannel : unsigned {
    kColor   = 1u << 0,
    kDepth   = 1u << 1,
    kFeature = 1u << 2,
    kAlpha   = 1u << 3,
    kIds     = 1u << 4,
    kAllChannels = kColor | kDepth | kFeature | kAlpha | kIds,
};

struct RenderOptions {
    unsigned channels     = kColor | kDepth | kAlpha;
    bool keepBlendRecords = false;
    /// Tile edge in pixels; <= 0 renders the whole image as one tile.
    int tileSize = kDefaultTileSize;
    int threads  = 1;
};

/// One contribution to a pixel, front to back. weight = alpha * transmittance.
struct BlendEntry {
    std::uint32_t splat; // index into the scene
    double alpha;
    double transmittance; // T before this splat
    double weight;
    double falloff; // exp(-0.5 d^T cov^-1 d); alpha = min(0.99, opacity * falloff)
};

/// Per-pixel ordered contribution lists kept for the backward passes.
class BlendRecords {
  public:
    BlendRecords() = default;
    BlendRecords(int width, int height) : mWidth(width), mRanges(static_cast<std::size_t>(width) * height) {}

    std::span<const BlendEntry>
    pixel(int x, int y) const {
        const Range &r = mRanges[static_cast<std::size_t>(y) * mWidth + x];
        if (r.count == 0) {
            return {};
        }
        return {mChunks[r.chunk].data() + r.offset, r.count};
    }

  private:
    friend class RenderAccess;
    struct Range {
        std::uint32_t chunk = 0, offset = 0, count = 0;
    };
    int mWidth = 0;
    std::vector<Range> mRanges;
    std::vector<std::vector<BlendEntry>> mChunks;
};

struct RenderOutput {
    int width  = 0;
    int height = 0;
    ImageF color;         // H x W x 3, includes the background term
    ImageF depth;         // H x W, sum of z_i w_i (no background term)
    ImageF feature;       // H x W x 16, sum of f_i w_i (no background term)
    ImageF alpha;         // H x W, 1 - T_N
    ImageF transmittance; // H x W, T_N; always filled
    LabelMap ids;         // argmax of blended one-hot object ids, 0 where alpha < 0.5
    std::optional<BlendRecords> records;

    /// Per scene index: activated opacity and evaluated colour before the clamp, for splats
    /// that survived culling (zero otherwise).
    std::vector<double> splatOpacity;
    std::vector<Vec3> splatColorRaw;

    /// depth / alpha where alpha > minAlpha, 0 elsewhere.
    ImageF normalizedDepth(double minAlpha = 1e-6) const;
};

/// Front-to-back alpha compositing in global depth order (ties by scene index).
/// Throws RenderError naming the first splat with non-finite parameters.
RenderOutput render(const GaussianScene &scene, const Camera &camera, const RenderOptions &options = {});

/// Gradient of a loss w.r.t. every identity feature, given dL/dF (H x W x 16).
std::vector<Feature> backwardFeatures(const GaussianScene &scene, const RenderOutput &out,
                                      const ImageF &dLdF);

struct AppearanceGradients {
    std::vector<Vec3> color;       // dL/d(clamped colour)
    std::vector<Vec3> shDc;        // dL/d(sh[0]), through the clamp and the C0 factor
    std::vector<double> opacityRaw; // dL/d(opacityRaw), through the alpha clamp and the sigmoid
};

/// Gradient of a loss w.r.t. colour and raw opacity given dL/dC (H x W x 3). Opacity gradients
/// account for each splat's effect on all later transmittances and the background term.
AppearanceGradients backwardAppearance(const GaussianScene &scene, const RenderOutput &out,
                                       const ImageF &dLdC);

} // namespace splatedit
