// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/adam.hpp>
#include <splatedit/error.hpp>
#include <splatedit/image_io.hpp>
#include <splatedit/inpaint.hpp>
#include <splatedit/knn.hpp>
#include <splatedit/metrics.hpp>
#include <splatedit/raster.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>

namespace splatedit {

std::vector<VirtualView>
renderVirtualViews(const GaussianScene &before, const GaussianScene &after, const std::vector<Camera> &cameras,
                   const std::vector<ObjectId> &removedIds, const NbsOptions &nbs, int threads) {
    std::vector<VirtualView> views;
    views.reserve(cameras.size());
    for (const auto &cam: cameras) {
        const auto out = render(after, cam, {.channels = kColor | kDepth | kAlpha, .threads = threads});
        views.push_back({cam, out.color, out.normalizedDepth(), nbsMask(before, after, cam, removedIds, nbs)});
    }
    return views;
}

ImageF
pushPull(const ImageF &image, const Mask &valid) {
    if (!valid.sameSize(image)) {
        throw InvalidArgument("push-pull: validity mask size does not match the image");
    }
    if (maskArea(valid) == 0 || maskArea(valid) == valid.pixelCount()) {
        return image;
    }
    const int ch = image.channels();
    struct Level {
        ImageF value;
        std::vector<double> weight;
    };
    std::vector<Level> levels;
    {
        Level l0{ImageF(image.width(), image.height(), ch), std::vector<double>(image.pixelCount())};
        for (std::size_t p = 0; p < image.pixelCount(); ++p) {
            if (valid.data()[p]) {
                l0.weight[p] = 1.0;
                for (int c = 0; c < ch; ++c) {
                    l0.value.data()[p * ch + c] = image.data()[p * ch + c];
                }
            }
        }
        levels.push_back(std::move(l0));
    }
    // Pull.
    while (levels.back().value.width() > 1 || levels.back().value.height() > 1) {
        const Level &f = levels.back();
        const int fw = f.value.width(), fh = f.value.height();
        const int cw = (fw + 1) / 2, ch2 = (fh + 1) / 2;
        Level c{ImageF(cw, ch2, ch), std::vector<double>(static_cast<std::size_t>(cw) * ch2)};
        for (int y = 0; y < ch2; ++y) {
            for (int x = 0; x < cw; ++x) {
                double w = 0.0;
                std::vector<double> v(ch, 0.0);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int fx = 2 * x + dx, fy = 2 * y + dy;
                        if (fx >= fw || fy >= fh) {
                            continue;
                        }
                        const double fwgt = f.weight[static_cast<std::size_t>(fy) * fw + fx];
                        w += fwgt;
                        for (int k = 0; k < ch; ++k) {
                            v[k] += fwgt * f.value.at(fx, fy, k);
                        }
                    }
                }
                c.weight[static_cast<std::size_t>(y) * cw + x] = std::min(1.0, w);
                if (w > 0.0) {
                    for (int k = 0; k < ch; ++k) {
                        c.value.at(x, y, k) = v[k] / w;
                    }
                }
            }
        }
        levels.push_back(std::move(c));
    }
    // Push.
    for (std::size_t li = levels.size() - 1; li-- > 0;) {
        Level &f       = levels[li];
        const Level &c = levels[li + 1];
        const int fw = f.value.width(), fh = f.value.height();
        const int cw = c.value.width(), chh = c.value.height();
        for (int y = 0; y < fh; ++y) {
            for (int x = 0; x < fw; ++x) {
                double &w = f.weight[static_cast<std::size_t>(y) * fw + x];
                if (w >= 1.0) {
                    continue;
                }
                const double sx = std::clamp((x + 0.5) / 2.0 - 0.5, 0.0, cw - 1.0);
                const double sy = std::clamp((y + 0.5) / 2.0 - 0.5, 0.0, chh - 1.0);
                const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
                const int x1 = std::min(x0 + 1, cw - 1), y1 = std::min(y0 + 1, chh - 1);
                const double ax = sx - x0, ay = sy - y0;
                for (int k = 0; k < ch; ++k) {
                    const double up = (1 - ay) * ((1 - ax) * c.value.at(x0, y0, k) + ax * c.value.at(x1, y0, k)) +
                                      ay * ((1 - ax) * c.value.at(x0, y1, k) + ax * c.value.at(x1, y1, k));
                    f.value.at(x, y, k) = w * f.value.at(x, y, k) + (1.0 - w) * up;
                }
                w = 1.0;
            }
        }
    }
    ImageF out = image;
    for (std::size_t p = 0; p < image.pixelCount(); ++p) {
        if (!valid.data()[p]) {
            for (int c = 0; c < ch; ++c) {
                out.data()[p * ch + c] = levels[0].value.data()[p * ch + c];
            }
        }
    }
    return out;
}

Reprojection
reproject(const InpaintCondition &cond, const Camera &target, const Mask &mask) {
    if (cond.color.width() != cond.camera.width || cond.color.height() != cond.camera.height ||
        !cond.depth.sameSize(cond.color) || mask.width() != target.width || mask.height() != target.height) {
        throw InvalidArgument("reprojection: image sizes do not match the cameras");
    }
    Reprojection r{ImageF(target.width, target.height, 3), ImageF(target.width, target.height, 1),
                   Mask(target.width, target.height, 1)};
    std::vector<double> zbuf(mask.pixelCount(), std::numeric_limits<double>::infinity());
    for (int y = 0; y < cond.camera.height; ++y) {
        for (int x = 0; x < cond.camera.width; ++x) {
            const double d = cond.depth.at(x, y);
            if (!(d > 0.0) || !std::isfinite(d)) {
                continue;
            }
            const Vec3 pc = target.toCamera(cond.camera.unproject(x, y, d));
            if (!(pc.z() > 0.0)) {
                continue;
            }
            const Vec2 px = target.projectCameraPoint(pc);
            const long tx = std::lround(px.x()), ty = std::lround(px.y());
            if (tx < 0 || ty < 0 || tx >= target.width || ty >= target.height || !mask.at(tx, ty)) {
                continue;
            }
            const std::size_t p = static_cast<std::size_t>(ty) * target.width + tx;
            if (pc.z() < zbuf[p]) {
                zbuf[p] = pc.z();
                r.hit.data()[p]   = 1;
                r.depth.data()[p] = pc.z();
                for (int c = 0; c < 3; ++c) {
                    r.color.data()[p * 3 + c] = cond.color.at(x, y, c);
                }
            }
        }
    }
    return r;
}

namespace {

Mask
invert(const Mask &m) {
    Mask out(m.width(), m.height(), 1);
    for (std::size_t p = 0; p < m.pixelCount(); ++p) {
        out.data()[p] = !m.data()[p];
    }
    return out;
}

ImageF
fillDepth(const ImageF &depth, const Mask &valid) {
    Mask v = valid;
    for (std::size_t p = 0; p < v.pixelCount(); ++p) {
        v.data()[p] = v.data()[p] && depth.data()[p] > 0.0;
    }
    return pushPull(depth, v);
}

} // namespace

Filled
BuiltinInpainter::fill(const VirtualView &view, const InpaintCondition *condition, std::size_t) {
    Mask valid   = invert(view.mask);
    ImageF color = view.color;
    ImageF depth = view.depth;
    if (condition) {
        const auto r = reproject(*condition, view.camera, view.mask);
        for (std::size_t p = 0; p < r.hit.pixelCount(); ++p) {
            if (r.hit.data()[p]) {
                valid.data()[p] = 1;
                depth.data()[p] = r.depth.data()[p];
                for (int c = 0; c < 3; ++c) {
                    color.data()[p * 3 + c] = r.color.data()[p * 3 + c];
                }
            }
        }
    }
    return {pushPull(color, valid), fillDepth(depth, valid)};
}

Filled
applyInpainter(Inpainter &inpainter, const VirtualView &view, const InpaintCondition *condition, std::size_t index) {
    if (view.color.width() != view.camera.width || view.color.height() != view.camera.height ||
        view.color.channels() != 3 || !view.depth.sameSize(view.color) || view.depth.channels() != 1 ||
        !view.mask.sameSize(view.color)) {
        throw InvalidArgument("virtual view " + std::to_string(index) + " has inconsistent image sizes");
    }
    if (maskArea(view.mask) == 0) {
        return {view.color, view.depth};
    }
    Filled f = inpainter.fill(view, inpainter.usesCondition() ? condition : nullptr, index);
    if (!f.color.sameShape(view.color)) {
        throw InpaintError("inpainter returned a colour image of the wrong shape");
    }
    if (!inpainter.inpaintsDepth()) {
        f.depth = fillDepth(view.depth, invert(view.mask));
    } else if (!f.depth.sameShape(view.depth)) {
        throw InpaintError("inpainter returned a depth image of the wrong shape");
    }
    for (std::size_t p = 0; p < view.mask.pixelCount(); ++p) {
        if (!view.mask.data()[p]) {
            f.depth.data()[p] = view.depth.data()[p];
            for (int c = 0; c < 3; ++c) {
                f.color.data()[p * 3 + c] = view.color.data()[p * 3 + c];
            }
        } else {
            bool finite = std::isfinite(f.depth.data()[p]);
            for (int c = 0; c < 3; ++c) {
                finite = finite && std::isfinite(f.color.data()[p * 3 + c]);
            }
            if (!finite) {
                throw InpaintError("inpainter returned a non-finite value at pixel " + std::to_string(p));
            }
        }
    }
    return f;
}

ExternalDirInpainter::ExternalDirInpainter(std::filesystem::path dir, std::string command, bool depth,
                                           double depthScale)
    : mDir(std::move(dir)), mCommand(std::move(command)), mDepth(depth), mDepthScale(depthScale) {
    if (!(depthScale > 0.0)) {
        throw InvalidArgument("external inpainter: depth scale must be positive");
    }
}

Filled
ExternalDirInpainter::fill(const VirtualView &view, const InpaintCondition *condition, std::size_t index) {
    namespace fs = std::filesystem;
    fs::create_directories(mDir);
    char stem[32];
    std::snprintf(stem, sizeof stem, "view_%03zu", index);
    const std::string s = stem;
    writeColorPng(mDir / (s + "_color.png"), view.color);
    writeDepthPng(mDir / (s + "_depth.png"), view.depth, mDepthScale);
    writeMaskPng(mDir / (s + "_mask.png"), view.mask);
    nlohmann::json j{{"index", index},
                     {"width", view.camera.width},
                     {"height", view.camera.height},
                     {"camera", cameraToJson(view.camera)},
                     {"color", s + "_color.png"},
                     {"depth", s + "_depth.png"},
                     {"mask", s + "_mask.png"},
                     {"depth_scale", mDepthScale},
                     {"layout",
                      {{"color", "8-bit RGB PNG, value / 255 in [0,1]"},
                       {"depth", "16-bit grey PNG, camera-space z = value / depth_scale, 0 = unknown"},
                       {"mask", "8-bit grey PNG, 255 = fill"}}},
                     {"outputs", {{"color", s + "_color_inpainted.png"}}}};
    if (mDepth) {
        j["outputs"]["depth"] = s + "_depth_inpainted.png";
    }
    if (condition) {
        writeColorPng(mDir / (s + "_condition.png"), condition->color);
        writeDepthPng(mDir / (s + "_condition_depth.png"), condition->depth, mDepthScale);
        j["condition"] = {{"camera", cameraToJson(condition->camera)},
                          {"color", s + "_condition.png"},
                          {"depth", s + "_condition_depth.png"}};
    } else {
        j["condition"] = nullptr;
    }
    const fs::path manifest = mDir / (s + ".json");
    std::ofstream(manifest) << j.dump(2) << '\n';

    if (!mCommand.empty()) {
        const std::string cmd = mCommand + " '" + manifest.string() + "'";
        const int rc          = std::system(cmd.c_str());
        if (rc != 0) {
            throw InpaintError("external inpainter command exited with status " + std::to_string(rc));
        }
    }
    const fs::path colorOut = mDir / (s + "_color_inpainted.png");
    if (!fs::exists(colorOut)) {
        throw InpaintError("external inpainter produced no '" + colorOut.filename().string() + "'");
    }
    Filled f;
    f.color = readColorPng(colorOut);
    if (mDepth) {
        const fs::path depthOut = mDir / (s + "_depth_inpainted.png");
        if (!fs::exists(depthOut)) {
            throw InpaintError("external inpainter produced no '" + depthOut.filename().string() + "'");
        }
        f.depth = readDepthPng(depthOut);
    }
    return f;
}

std::vector<Filled>
recursiveInpaint(const std::vector<VirtualView> &views, Inpainter &inpainter, bool conditioning,
                 const std::function<void(std::size_t)> &onView) {
    if (views.empty()) {
        throw InvalidArgument("recursive inpainting needs at least one view");
    }
    std::vector<Filled> out;
    out.reserve(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        std::optional<InpaintCondition> cond;
        if (conditioning && i > 0) {
            cond = InpaintCondition{views[i - 1].camera, out.back().color, out.back().depth};
        }
        try {
            out.push_back(applyInpainter(inpainter, views[i], cond ? &*cond : nullptr, i));
        } catch (const std::exception &e) {
            throw InpaintError("view " + std::to_string(i) + ": " + e.what());
        }
        if (onView) {
            onView(i);
        }
    }
    return out;
}

void
InpaintConfig::validate() const {
    if (!(lambda1 >= 0.0 && lambda1 <= 1.0) || !(lambda2 >= 0.0)) {
        throw InvalidArgument("inpaint config: lambda1 must lie in [0,1] and lambda2 >= 0");
    }
    if (iterations < 0 || !(dcLearningRate > 0.0) || !(opacityLearningRate > 0.0)) {
        throw InvalidArgument("inpaint config: iterations >= 0 and positive learning rates required");
    }
    if (!(initOpacity > 0.0 && initOpacity < 1.0) || !(scaleFactor > 0.0) || maxInitSplats == 0 ||
        !(pruneOpacity >= 0.0 && pruneOpacity < 1.0)) {
        throw InvalidArgument("inpaint config: init opacity in (0,1), scale factor > 0, prune opacity in [0,1)");
    }
}

std::vector<Gaussian>
initGaussiansFromRgbd(const ImageF &color, const ImageF &depth, const Mask &mask, const Camera &camera,
                      const InpaintConfig &config) {
    config.validate();
    if (color.width() != camera.width || color.height() != camera.height || color.channels() != 3 ||
        !depth.sameSize(color) || !mask.sameSize(color)) {
        throw InvalidArgument("depth-guided init: image sizes do not match the camera");
    }
    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) {
                continue;
            }
            const double d = depth.at(x, y);
            if (!std::isfinite(d)) {
                throw InvalidArgument("depth-guided init: non-finite depth at pixel (" + std::to_string(x) + ", " +
                                      std::to_string(y) + ")");
            }
            if (d > 0.0) {
                pixels.emplace_back(x, y);
            }
        }
    }
    const std::size_t stride = (pixels.size() + config.maxInitSplats - 1) / std::max<std::size_t>(1, config.maxInitSplats);
    std::vector<Vec3> points;
    std::vector<std::pair<int, int>> used;
    for (std::size_t i = 0; i < pixels.size(); i += std::max<std::size_t>(1, stride)) {
        const auto [x, y] = pixels[i];
        points.push_back(camera.unproject(x, y, depth.at(x, y)));
        used.push_back(pixels[i]);
    }
    std::vector<Gaussian> out;
    if (points.empty()) {
        return out;
    }
    const KdTree tree(points);
    const double opacityRaw = logit(config.initOpacity);
    for (std::uint32_t i = 0; i < points.size(); ++i) {
        const auto [x, y] = used[i];
        double spacing    = depth.at(x, y) / camera.fx; // one pixel at this depth
        if (points.size() > 1) {
            const auto nn  = tree.nearest(points[i], 1, i);
            const double d = (points[nn[0]] - points[i]).norm();
            if (d > 0.0) {
                spacing = d;
            }
        }
        Gaussian g;
        g.position   = points[i];
        g.logScale   = Vec3::Constant(std::log(spacing * config.scaleFactor));
        g.opacityRaw = opacityRaw;
        g.setBaseColor(Vec3(color.at(x, y, 0), color.at(x, y, 1), color.at(x, y, 2)));
        g.objectId = 0;
        out.push_back(g);
    }
    return out;
}

InpaintLoss
inpaintLoss(const ImageF &render, const ImageF &target, const Mask &mask, const InpaintConfig &config,
            ImageF *gradient) {
    if (!render.sameShape(target) || render.channels() != 3 || !mask.sameSize(render)) {
        throw InvalidArgument("inpaint loss: render, target and mask shapes differ");
    }
    InpaintLoss loss;
    const std::size_t area = maskArea(mask);
    const double inv       = area ? 1.0 / (3.0 * static_cast<double>(area)) : 0.0;
    if (gradient) {
        *gradient = ImageF(render.width(), render.height(), 3);
    }
    for (std::size_t p = 0; p < mask.pixelCount(); ++p) {
        if (!mask.data()[p]) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = render.data()[p * 3 + c] - target.data()[p * 3 + c];
            loss.l1 += std::abs(d) * inv;
            if (gradient) {
                gradient->data()[p * 3 + c] = (1.0 - config.lambda1) * inv * ((d > 0.0) - (d < 0.0));
            }
        }
    }
    loss.dssim = dssim(target, render);
    loss.total = (1.0 - config.lambda1) * loss.l1 + config.lambda1 * loss.dssim;
    if (gradient && config.lambda1 != 0.0) {
        const ImageF g = ssimGradient(target, render);
        for (std::size_t i = 0; i < g.data().size(); ++i) {
            gradient->data()[i] -= 0.5 * config.lambda1 * g.data()[i];
        }
    }
    if (config.perceptual) {
        ImageF pg;
        loss.perceptual = config.perceptual(render, target, mask, gradient ? &pg : nullptr);
        loss.total += config.lambda2 * loss.perceptual;
        if (gradient) {
            if (!pg.sameShape(render)) {
                throw InvalidArgument("perceptual loss returned a gradient of the wrong shape");
            }
            for (std::size_t i = 0; i < pg.data().size(); ++i) {
                gradient->data()[i] += config.lambda2 * pg.data()[i];
            }
        }
    }
    return loss;
}

GaussianScene
optimizeInpaint(const GaussianScene &input, std::size_t firstNew, const std::vector<Camera> &cameras,
                const std::vector<ImageF> &targets, const std::vector<Mask> &masks, const InpaintConfig &config,
                const std::function<void(const OptimizeStep &)> &onStep) {
    config.validate();
    if (cameras.empty() || cameras.size() != targets.size() || cameras.size() != masks.size()) {
        throw InvalidArgument("inpaint optimisation needs one target and mask per view and at least one view");
    }
    if (firstNew >= input.size()) {
        throw InvalidArgument("inpaint optimisation has no new splats to train");
    }
    GaussianScene scene = input;
    const std::size_t n = scene.size() - firstNew;
    std::vector<double> dc(3 * n), dcGrad(3 * n), op(n), opGrad(n);
    Adam dcAdam(dc.size(), config.dcLearningRate), opAdam(op.size(), config.opacityLearningRate);
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick(0, cameras.size() - 1);

    for (int it = 0; it < config.iterations; ++it) {
        const std::size_t v = pick(rng);
        const auto out =
            render(scene, cameras[v], {.channels = kColor, .keepBlendRecords = true, .threads = config.threads});
        ImageF dLdC;
        const InpaintLoss loss = inpaintLoss(out.color, targets[v], masks[v], config, &dLdC);
        if (onStep) {
            onStep({it, v, loss});
        }
        const auto grad = backwardAppearance(scene, out, dLdC);
        for (std::size_t i = 0; i < n; ++i) {
            const auto &g = scene.gaussians[firstNew + i];
            for (int c = 0; c < 3; ++c) {
                dc[3 * i + c]     = g.sh[0][c];
                dcGrad[3 * i + c] = grad.shDc[firstNew + i][c];
            }
            op[i]     = g.opacityRaw;
            opGrad[i] = grad.opacityRaw[firstNew + i];
        }
        dcAdam.step(dc, dcGrad);
        opAdam.step(op, opGrad);
        for (std::size_t i = 0; i < n; ++i) {
            auto &g = scene.gaussians[firstNew + i];
            for (int c = 0; c < 3; ++c) {
                g.sh[0][c] = dc[3 * i + c];
            }
            g.opacityRaw = op[i];
        }
    }
    std::size_t keep = firstNew;
    for (std::size_t i = firstNew; i < scene.size(); ++i) {
        if (scene.gaussians[i].opacity() >= config.pruneOpacity) {
            scene.gaussians[keep++] = scene.gaussians[i];
        }
    }
    scene.gaussians.resize(keep);
    return scene;
}

namespace {

double
meanLoss(const GaussianScene &scene, const std::vector<VirtualView> &views, const std::vector<Filled> &filled,
         const InpaintConfig &config) {
    double sum = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const auto out = render(scene, views[v].camera, {.channels = kColor, .threads = config.threads});
        sum += inpaintLoss(out.color, filled[v].color, views[v].mask, config).total;
    }
    return sum / static_cast<double>(views.size());
}

} // namespace

InpaintResult
inpaintScene(const GaussianScene &before, const GaussianScene &after, const std::vector<Camera> &cameras,
             const std::vector<ObjectId> &removedIds, Inpainter &inpainter, const InpaintConfig &config,
             bool conditioning, const std::function<void(const InpaintProgress &)> &onProgress) {
    config.validate();
    if (cameras.empty()) {
        throw InvalidArgument("inpainting needs at least one virtual camera");
    }
    InpaintResult result;
    result.views     = renderVirtualViews(before, after, cameras, removedIds, {}, config.threads);
    const int nviews = static_cast<int>(cameras.size());
    result.filled    = recursiveInpaint(result.views, inpainter, conditioning, [&](std::size_t i) {
        if (onProgress) {
            onProgress({"inpaint", static_cast<int>(i) + 1, nviews, 0.0});
        }
    });

    GaussianScene added;
    added.shDegree   = after.shDegree;
    added.background = after.background;
    for (int v = 0; v < nviews; ++v) {
        Mask mask = result.views[v].mask;
        if (!added.gaussians.empty()) {
            const auto cover = render(added, cameras[v], {.channels = kAlpha, .threads = config.threads}).alpha;
            for (std::size_t p = 0; p < mask.pixelCount(); ++p) {
                mask.data()[p] = mask.data()[p] && cover.data()[p] < 0.5;
            }
        }
        auto fresh = initGaussiansFromRgbd(result.filled[v].color, result.filled[v].depth, mask, cameras[v], config);
        added.gaussians.insert(added.gaussians.end(), fresh.begin(), fresh.end());
        if (onProgress) {
            onProgress({"init", v + 1, nviews, static_cast<double>(added.size())});
        }
    }
    result.initialized = added.size();

    result.scene = after;
    if (added.gaussians.empty()) {
        return result;
    }
    result.scene.gaussians.insert(result.scene.gaussians.end(), added.gaussians.begin(), added.gaussians.end());
    std::vector<ImageF> targets;
    std::vector<Mask> masks;
    for (std::size_t v = 0; v < result.views.size(); ++v) {
        targets.push_back(result.filled[v].color);
        masks.push_back(result.views[v].mask);
    }
    result.initialLoss     = meanLoss(result.scene, result.views, result.filled, config);
    const std::size_t size = result.scene.size();
    result.scene           = optimizeInpaint(result.scene, after.size(), cameras, targets, masks, config,
                                             [&](const OptimizeStep &s) {
                                       if (onProgress) {
                                           onProgress({"optimize", s.iteration + 1, config.iterations, s.loss.total});
                                       }
                                   });
    result.pruned    = size - result.scene.size();
    result.finalLoss = meanLoss(result.scene, result.views, result.filled, config);
    return result;
}

} // namespace splatedit
