// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Filling the never-before-seen region: per-view 2-D inpainting chained across an orbit,
// unprojection of the filled colour and depth into new splats, and appearance optimisation of
// those splats against the filled views.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/edit.hpp>
#include <splatedit/image.hpp>
#include <splatedit/scene.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace splatedit {

struct VirtualView {
    Camera camera;
    ImageF color; // H x W x 3, render of the edited scene
    ImageF depth; // H x W, alpha-normalised depth of the edited scene (0 where empty)
    Mask mask;    // NBS mask
};

/// Renders colour and depth of `after` and the NBS mask for each camera.
std::vector<VirtualView> renderVirtualViews(const GaussianScene &before, const GaussianScene &after,
                                            const std::vector<Camera> &cameras,
                                            const std::vector<ObjectId> &removedIds, const NbsOptions &nbs = {},
                                            int threads = 1);

/// The previous view's filled result and its pose.
struct InpaintCondition {
    Camera camera;
    ImageF color;
    ImageF depth;
};

struct Filled {
    ImageF color;
    ImageF depth;
};

class Inpainter {
  public:
    virtual ~Inpainter() = default;
    virtual bool usesCondition() const = 0;
    virtual bool inpaintsDepth() const = 0;
    /// May return anything outside the mask; the harness restores those pixels.
    virtual Filled fill(const VirtualView &view, const InpaintCondition *condition, std::size_t index) = 0;
};

/// Calls the inpainter and enforces its contract: empty mask is the identity, output shapes and
/// finiteness are checked, pixels outside the mask are copied back from the input bit for bit,
/// and depth is filled by push-pull when the inpainter does not produce it.
Filled applyInpainter(Inpainter &inpainter, const VirtualView &view, const InpaintCondition *condition,
                      std::size_t index);

/// Fills pixels where `valid` is 0 from those where it is 1 by pyramid push-pull (bilinear push).
/// Valid pixels are returned unchanged. With no valid pixel the image is returned as is.
ImageF pushPull(const ImageF &image, const Mask &valid);

/// Masked pixels of `target` that the condition view sees, z-buffered nearest-pixel forward
/// reprojection through the condition depth. Returns colour, camera-space depth and a coverage mask.
struct Reprojection {
    ImageF color;
    ImageF depth;
    Mask hit;
};
Reprojection reproject(const InpaintCondition &condition, const Camera &target, const Mask &mask);

/// Geometric stand-in for a neural inpainter: reprojects the condition view into the hole, then
/// diffuses the rest by push-pull.
class BuiltinInpainter final : public Inpainter {
  public:
    bool
    usesCondition() const override {
        return true;
    }
    bool
    inpaintsDepth() const override {
        return true;
    }
    Filled fill(const VirtualView &view, const InpaintCondition *condition, std::size_t index) override;
};

/// Hands views to an external program through files. Per view it writes
///   view_NNN_color.png, view_NNN_depth.png (16-bit, depth_scale text chunk), view_NNN_mask.png,
///   view_NNN_condition.png and view_NNN_condition_depth.png (when conditioned), view_NNN.json,
/// runs `command` (if any) with the view JSON path appended, then reads view_NNN_color_inpainted.png
/// and, when depth is declared, view_NNN_depth_inpainted.png.
class ExternalDirInpainter final : public Inpainter {
  public:
    ExternalDirInpainter(std::filesystem::path dir, std::string command = {}, bool depth = false,
                         double depthScale = 1000.0);
    bool
    usesCondition() const override {
        return true;
    }
    bool
    inpaintsDepth() const override {
        return mDepth;
    }
    Filled fill(const VirtualView &view, const InpaintCondition *condition, std::size_t index) override;

  private:
    std::filesystem::path mDir;
    std::string mCommand;
    bool mDepth;
    double mDepthScale;
};

/// View 0 unconditioned, view t+1 conditioned on the result for view t (when `conditioning` and
/// the inpainter takes conditions). Failures are rethrown as InpaintError naming the view.
std::vector<Filled> recursiveInpaint(const std::vector<VirtualView> &views, Inpainter &inpainter,
                                     bool conditioning = true,
                                     const std::function<void(std::size_t)> &onView = {});

/// Returns a perceptual distance between render and target under the mask and, if `grad` is
/// non-null, writes its gradient w.r.t. the render.
using PerceptualLoss = std::function<double(const ImageF &render, const ImageF &target, const Mask &mask, ImageF *grad)>;

struct InpaintConfig {
    double lambda1       = 0.2;
    double lambda2       = 0.005; // applies only when `perceptual` is set
    int iterations       = 2000;
    double dcLearningRate      = 0.0025;
    double opacityLearningRate = 0.05;
    double initOpacity   = 0.5;
    double scaleFactor   = 1.0;
    std::size_t maxInitSplats = 50000;
    double pruneOpacity  = 0.005;
    std::uint64_t seed   = 0;
    int threads          = 1;
    PerceptualLoss perceptual;

    void validate() const;
};

/// One isotropic splat per masked pixel (every k-th in raster order above maxInitSplats) at the
/// unprojection through `depth`. Scale is the nearest-neighbour spacing times scaleFactor.
std::vector<Gaussian> initGaussiansFromRgbd(const ImageF &color, const ImageF &depth, const Mask &mask,
                                            const Camera &camera, const InpaintConfig &config);

struct InpaintLoss {
    double l1         = 0.0; // masked mean absolute error
    double dssim      = 0.0;
    double perceptual = 0.0;
    double total      = 0.0;
};

/// Loss of a render against the filled target and its gradient w.r.t. the render.
InpaintLoss inpaintLoss(const ImageF &render, const ImageF &target, const Mask &mask, const InpaintConfig &config,
                        ImageF *gradient = nullptr);

struct OptimizeStep {
    int iteration;
    std::size_t view;
    InpaintLoss loss;
};

/// Adam on the DC colour and raw opacity of splats [firstNew, size), one seeded random view per
/// step; afterwards new splats with opacity below pruneOpacity are dropped.
GaussianScene optimizeInpaint(const GaussianScene &scene, std::size_t firstNew, const std::vector<Camera> &cameras,
                              const std::vector<ImageF> &targets, const std::vector<Mask> &masks,
                              const InpaintConfig &config,
                              const std::function<void(const OptimizeStep &)> &onStep = {});

struct InpaintResult {
    GaussianScene scene;
    std::vector<VirtualView> views;
    std::vector<Filled> filled;
    std::size_t initialized = 0;
    std::size_t pruned      = 0;
    double initialLoss      = 0.0; // mean over views before optimisation
    double finalLoss        = 0.0;
};

struct InpaintProgress {
    std::string stage; // "inpaint", "init", "optimize"
    int step   = 0;
    int total  = 0;
    double loss = 0.0;
};

/// Virtual views, recursive inpainting, depth-guided initialisation (each view only adds splats
/// where the splats already added cover less than half), then optimisation.
InpaintResult inpaintScene(const GaussianScene &before, const GaussianScene &after, const std::vector<Camera> &cameras,
                           const std::vector<ObjectId> &removedIds, Inpainter &inpainter, const InpaintConfig &config,
                           bool conditioning = true,
                           const std::function<void(const InpaintProgress &)> &onProgress = {});

} // namespace splatedit
