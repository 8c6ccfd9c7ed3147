// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/edit.hpp>
#include <splatedit/error.hpp>
#include <splatedit/image_io.hpp>
#include <splatedit/inpaint.hpp>
#include <splatedit/metrics.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/synth.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "test_scenes.hpp"

using namespace splatedit;
using namespace splatedit::testing;

namespace {

struct FloorCase {
    SynthResult synth;
    GaussianScene truth; // object-free scene
    Removal removal;
    Trajectory trajectory;
};

const FloorCase &
floorCase(int views) {
    static std::map<int, FloorCase> cache;
    auto it = cache.find(views);
    if (it == cache.end()) {
        const auto spec = loadSynthSpec(SPLATEDIT_DATA_DIR "/occluder_floor.toml");
        FloorCase c;
        c.synth      = synthScene(spec);
        c.truth      = synthScene(backgroundOnly(spec)).scene;
        c.removal    = removeObjects(c.synth.scene, {1}, true);
        c.trajectory = virtualTrajectory(c.synth.scene, c.removal.scene, c.synth.cameras, {1}, {.views = views});
        it           = cache.emplace(views, std::move(c)).first;
    }
    return it->second;
}

Mask
randomMask(std::mt19937_64 &rng, int w, int h, double p) {
    std::bernoulli_distribution b(p);
    Mask m(w, h, 1);
    for (auto &v: m.data()) {
        v = b(rng);
    }
    return m;
}

VirtualView
syntheticView(std::mt19937_64 &rng, int w, int h) {
    VirtualView v{makeCamera(w, h, 20.0), randomImage(rng, w, h, 3), ImageF(w, h, 1, 2.0), randomMask(rng, w, h, 0.3)};
    return v;
}

// Returns garbage everywhere, optionally NaN in the mask or a wrong shape, or throws.
class RogueInpainter final : public Inpainter {
  public:
    enum class Mode { Garbage, NaN, WrongShape, Throw };
    Mode mode = Mode::Garbage;
    bool depth = false;
    std::size_t throwAt = 0;
    std::vector<bool> sawCondition;
    std::vector<InpaintCondition> conditions;

    bool
    usesCondition() const override {
        return true;
    }
    bool
    inpaintsDepth() const override {
        return depth;
    }
    Filled
    fill(const VirtualView &view, const InpaintCondition *cond, std::size_t index) override {
        sawCondition.push_back(cond != nullptr);
        if (cond) {
            conditions.push_back(*cond);
        }
        if (mode == Mode::Throw && index == throwAt) {
            throw std::runtime_error("model crashed");
        }
        std::mt19937_64 rng(index);
        Filled f{randomImage(rng, view.color.width(), view.color.height(), 3),
                 ImageF(view.depth.width(), view.depth.height(), 1, 7.0)};
        if (mode == Mode::NaN) {
            for (std::size_t p = 0; p < view.mask.pixelCount(); ++p) {
                if (view.mask.data()[p]) {
                    f.color.data()[3 * p] = std::numeric_limits<double>::quiet_NaN();
                    break;
                }
            }
        }
        if (mode == Mode::WrongShape) {
            f.color = ImageF(1, 1, 3);
        }
        return f;
    }
};

bool
sameBits(const ImageF &a, const ImageF &b) {
    return a.sameShape(b) &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

} // namespace

TEST(PushPull, ConstantIsAFixedPoint) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        const int w = 7 + 9 * trial, h = 5 + 6 * trial;
        const ImageF img(w, h, 3, 0.37);
        auto valid = randomMask(rng, w, h, 0.2);
        valid.at(0, 0) = 1;
        const auto out = pushPull(img, valid);
        for (double v: out.data()) {
            EXPECT_NEAR(v, 0.37, 1e-12);
        }
    }
}

TEST(PushPull, ValidPixelsKeptAndFillBounded) {
    std::mt19937_64 rng(2);
    const auto img   = randomImage(rng, 40, 30, 2);
    const auto valid = randomMask(rng, 40, 30, 0.1);
    const auto out   = pushPull(img, valid);
    double lo = 1.0, hi = 0.0;
    for (std::size_t p = 0; p < valid.pixelCount(); ++p) {
        for (int c = 0; c < 2; ++c) {
            if (valid.data()[p]) {
                EXPECT_EQ(out.data()[2 * p + c], img.data()[2 * p + c]);
                lo = std::min(lo, img.data()[2 * p + c]);
                hi = std::max(hi, img.data()[2 * p + c]);
            }
        }
    }
    // Every filled value is a convex combination of valid values.
    for (std::size_t p = 0; p < valid.pixelCount(); ++p) {
        for (int c = 0; c < 2; ++c) {
            EXPECT_GE(out.data()[2 * p + c], lo - 1e-12);
            EXPECT_LE(out.data()[2 * p + c], hi + 1e-12);
        }
    }
    EXPECT_TRUE(sameBits(pushPull(img, Mask(40, 30, 1)), img));
    EXPECT_THROW(pushPull(img, Mask(4, 3, 1)), InvalidArgument);
}

TEST(Harness, EmptyMaskIsIdentity) {
    std::mt19937_64 rng(3);
    auto view = syntheticView(rng, 16, 12);
    view.mask = Mask(16, 12, 1);
    RogueInpainter rogue;
    const auto f = applyInpainter(rogue, view, nullptr, 0);
    EXPECT_TRUE(sameBits(f.color, view.color));
    EXPECT_TRUE(sameBits(f.depth, view.depth));
    EXPECT_TRUE(rogue.sawCondition.empty());
}

TEST(Harness, OutsideMaskBitExactAndDepthFilled) {
    std::mt19937_64 rng(4);
    for (bool declaresDepth: {false, true}) {
        auto view = syntheticView(rng, 20, 14);
        for (std::size_t p = 0; p < view.depth.pixelCount(); ++p) {
            view.depth.data()[p] = 1.0 + 0.01 * static_cast<double>(p);
        }
        view.color.at(3, 3, 1) = -0.0;
        RogueInpainter rogue;
        rogue.depth  = declaresDepth;
        const auto f = applyInpainter(rogue, view, nullptr, 5);
        for (std::size_t p = 0; p < view.mask.pixelCount(); ++p) {
            if (!view.mask.data()[p]) {
                EXPECT_EQ(std::memcmp(&f.color.data()[3 * p], &view.color.data()[3 * p], 3 * sizeof(double)), 0);
                EXPECT_EQ(std::memcmp(&f.depth.data()[p], &view.depth.data()[p], sizeof(double)), 0);
            } else if (declaresDepth) {
                EXPECT_EQ(f.depth.data()[p], 7.0);
            } else {
                EXPECT_GE(f.depth.data()[p], 1.0);
                EXPECT_LE(f.depth.data()[p], 1.0 + 0.01 * static_cast<double>(view.depth.pixelCount()));
            }
        }
    }
}

TEST(Harness, RejectsBadOutputs) {
    std::mt19937_64 rng(5);
    const auto view = syntheticView(rng, 10, 8);
    RogueInpainter nan;
    nan.mode = RogueInpainter::Mode::NaN;
    EXPECT_THROW(applyInpainter(nan, view, nullptr, 0), InpaintError);
    RogueInpainter shape;
    shape.mode = RogueInpainter::Mode::WrongShape;
    EXPECT_THROW(applyInpainter(shape, view, nullptr, 0), InpaintError);
    auto bad  = view;
    bad.depth = ImageF(3, 3, 1);
    EXPECT_THROW(applyInpainter(nan, bad, nullptr, 0), InvalidArgument);
}

TEST(Builtin, ConstantImageHoleFilledWithConstant) {
    std::mt19937_64 rng(6);
    VirtualView view{makeCamera(30, 20, 25.0), ImageF(30, 20, 3, 0.6), ImageF(30, 20, 1, 3.0), Mask(30, 20, 1)};
    for (int y = 5; y < 15; ++y) {
        for (int x = 8; x < 20; ++x) {
            view.mask.at(x, y)    = 1;
            view.depth.at(x, y)   = 0.0;
            view.color.at(x, y, 0) = 0.0;
        }
    }
    BuiltinInpainter builtin;
    const auto f = applyInpainter(builtin, view, nullptr, 0);
    for (double v: f.color.data()) {
        EXPECT_NEAR(v, 0.6, 1e-12);
    }
    for (double v: f.depth.data()) {
        EXPECT_NEAR(v, 3.0, 1e-12);
    }
}

TEST(Builtin, TrueBackgroundConditionTransfers) {
    const auto &c      = floorCase(30);
    const auto &cams   = c.trajectory.cameras;
    const auto cond0   = render(c.truth, cams[0], {.channels = kColor | kDepth | kAlpha});
    const auto views   = renderVirtualViews(c.synth.scene, c.removal.scene, {cams[1]}, {1});
    const auto truth1  = render(c.truth, cams[1], {.channels = kColor}).color;
    const InpaintCondition cond{cams[0], cond0.color, cond0.normalizedDepth()};
    BuiltinInpainter builtin;
    const auto f = applyInpainter(builtin, views[0], &cond, 1);
    std::size_t close = 0, total = 0;
    for (std::size_t p = 0; p < views[0].mask.pixelCount(); ++p) {
        if (!views[0].mask.data()[p]) {
            continue;
        }
        ++total;
        double err = 0.0;
        for (int k = 0; k < 3; ++k) {
            err = std::max(err, std::abs(f.color.data()[3 * p + k] - truth1.data()[3 * p + k]));
        }
        close += err <= 0.05;
    }
    ASSERT_GT(total, 100u);
    EXPECT_GE(static_cast<double>(close) / static_cast<double>(total), 0.8);
}

TEST(Recursive, SingleViewAndEmptyMasks) {
    std::mt19937_64 rng(7);
    const auto view = syntheticView(rng, 18, 12);
    BuiltinInpainter builtin;
    const auto one   = recursiveInpaint({view}, builtin);
    const auto plain = applyInpainter(builtin, view, nullptr, 0);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_TRUE(sameBits(one[0].color, plain.color));
    EXPECT_TRUE(sameBits(one[0].depth, plain.depth));

    std::vector<VirtualView> empties;
    for (int i = 0; i < 3; ++i) {
        auto v = syntheticView(rng, 18, 12);
        v.mask = Mask(18, 12, 1);
        empties.push_back(v);
    }
    const auto out = recursiveInpaint(empties, builtin);
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(sameBits(out[i].color, empties[i].color));
        EXPECT_TRUE(sameBits(out[i].depth, empties[i].depth));
    }
    EXPECT_THROW(recursiveInpaint({}, builtin), InvalidArgument);
}

TEST(Recursive, ChainsConditionsAndNamesFailingView) {
    std::mt19937_64 rng(8);
    std::vector<VirtualView> views;
    for (int i = 0; i < 4; ++i) {
        auto v          = syntheticView(rng, 12, 10);
        v.camera.name   = "v" + std::to_string(i);
        views.push_back(v);
    }
    RogueInpainter rogue;
    std::vector<std::size_t> seen;
    const auto out = recursiveInpaint(views, rogue, true, [&](std::size_t i) { seen.push_back(i); });
    EXPECT_EQ(rogue.sawCondition, (std::vector<bool>{false, true, true, true}));
    for (std::size_t t = 1; t < 4; ++t) {
        EXPECT_EQ(rogue.conditions[t - 1].camera.name, views[t - 1].camera.name);
        EXPECT_TRUE(sameBits(rogue.conditions[t - 1].color, out[t - 1].color));
        EXPECT_TRUE(sameBits(rogue.conditions[t - 1].depth, out[t - 1].depth));
    }
    EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));

    RogueInpainter unconditioned;
    recursiveInpaint(views, unconditioned, false);
    EXPECT_EQ(unconditioned.sawCondition, (std::vector<bool>(4, false)));

    RogueInpainter crashing;
    crashing.mode    = RogueInpainter::Mode::Throw;
    crashing.throwAt = 2;
    try {
        recursiveInpaint(views, crashing);
        FAIL() << "expected InpaintError";
    } catch (const InpaintError &e) {
        EXPECT_NE(std::string(e.what()).find("view 2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("model crashed"), std::string::npos);
    }
}

TEST(Recursive, ConditioningImprovesCrossViewConsistency) {
    const auto &c    = floorCase(8);
    const auto views = renderVirtualViews(c.synth.scene, c.removal.scene, c.trajectory.cameras, {1});
    BuiltinInpainter builtin;
    auto consistency = [&](bool conditioning) {
        const auto filled = recursiveInpaint(views, builtin, conditioning);
        std::vector<ImageF> colors, depths;
        std::vector<Mask> masks;
        for (std::size_t i = 0; i < views.size(); ++i) {
            colors.push_back(filled[i].color);
            depths.push_back(filled[i].depth);
            masks.push_back(views[i].mask);
        }
        return crossViewConsistency(c.trajectory.cameras, colors, depths, masks);
    };
    const double with = consistency(true), without = consistency(false);
    EXPECT_GT(without, 0.0);
    EXPECT_LT(with, without);
}

TEST(External, CopyCommandRoundTrip) {
    TempDir dir("external");
    std::mt19937_64 rng(9);
    std::vector<VirtualView> views;
    for (int i = 0; i < 2; ++i) {
        auto v = syntheticView(rng, 14, 10);
        for (std::size_t p = 0; p < v.depth.pixelCount(); ++p) {
            v.depth.data()[p] = 0.5 + 0.001 * static_cast<double>(p);
        }
        views.push_back(v);
    }
    const std::string copy =
        "sh -c 'b=\"${1%.json}\"; cp \"${b}_color.png\" \"${b}_color_inpainted.png\" && "
        "cp \"${b}_depth.png\" \"${b}_depth_inpainted.png\"' sh";
    ExternalDirInpainter ext(dir.path(), copy, true, 1000.0);
    const auto out = recursiveInpaint(views, ext);
    for (int i = 0; i < 2; ++i) {
        for (std::size_t p = 0; p < views[i].mask.pixelCount(); ++p) {
            for (int k = 0; k < 3; ++k) {
                EXPECT_NEAR(out[i].color.data()[3 * p + k], views[i].color.data()[3 * p + k], 0.5 / 255 + 1e-12);
            }
            EXPECT_NEAR(out[i].depth.data()[p], views[i].depth.data()[p], 0.5 / 1000 + 1e-12);
        }
    }
    std::ifstream in(dir / "view_001.json");
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["index"], 1);
    EXPECT_EQ(j["mask"], "view_001_mask.png");
    EXPECT_EQ(j["outputs"]["color"], "view_001_color_inpainted.png");
    EXPECT_EQ(j["outputs"]["depth"], "view_001_depth_inpainted.png");
    EXPECT_EQ(j["condition"]["color"], "view_001_condition.png");
    EXPECT_TRUE(std::filesystem::exists(dir / "view_001_condition_depth.png"));
    EXPECT_TRUE(nlohmann::json::parse(std::ifstream(dir / "view_000.json"))["condition"].is_null());
}

TEST(External, MissingOutputAndFailingCommand) {
    TempDir dir("external_fail");
    std::mt19937_64 rng(10);
    const auto view = syntheticView(rng, 8, 6);
    ExternalDirInpainter silent(dir.path());
    EXPECT_THROW(applyInpainter(silent, view, nullptr, 0), InpaintError);
    ExternalDirInpainter failing(dir.path(), "false");
    EXPECT_THROW(applyInpainter(failing, view, nullptr, 0), InpaintError);
    EXPECT_THROW(ExternalDirInpainter(dir.path(), "", false, 0.0), InvalidArgument);
}

TEST(DepthInit, PrincipalPixelLandsOnForwardAxis) {
    const Camera cam = makeCamera(9, 7, 12.0, Vec3(1, 2, 3), Vec3(-1, 0.5, 4), Vec3(0, 0, 1));
    Mask mask(9, 7, 1);
    mask.at(4, 3) = 1;
    const auto g = initGaussiansFromRgbd(ImageF(9, 7, 3, 0.25), ImageF(9, 7, 1, 2.0), mask, cam, {});
    ASSERT_EQ(g.size(), 1u);
    EXPECT_LT((g[0].position - (cam.center() + 2.0 * cam.forward())).norm(), 1e-12);
    EXPECT_NEAR(g[0].opacity(), 0.5, 1e-15);
    EXPECT_LT((g[0].baseColor() - Vec3::Constant(0.25)).norm(), 1e-12);
    EXPECT_EQ(g[0].rotation, Vec4(1, 0, 0, 0));
    EXPECT_EQ(g[0].objectId, ObjectId(0));
    for (double f: g[0].feature) {
        EXPECT_EQ(f, 0.0);
    }
    EXPECT_NEAR(std::exp(g[0].logScale.x()), 2.0 / 12.0, 1e-12);
}

TEST(DepthInit, EmptyStrideAndErrors) {
    const Camera cam = makeCamera(20, 10, 15.0);
    const ImageF color(20, 10, 3, 0.5), depth(20, 10, 1, 1.5);
    EXPECT_TRUE(initGaussiansFromRgbd(color, depth, Mask(20, 10, 1), cam, {}).empty());

    const Mask full(20, 10, 1, 1);
    InpaintConfig cfg;
    cfg.maxInitSplats = 60;
    const auto strided = initGaussiansFromRgbd(color, depth, full, cam, cfg);
    EXPECT_EQ(strided.size(), 50u); // 200 pixels, every 4th
    cfg.scaleFactor = 2.0;
    cfg.maxInitSplats = 50000;
    const auto dense = initGaussiansFromRgbd(color, depth, full, cam, cfg);
    ASSERT_EQ(dense.size(), 200u);
    // Neighbouring pixels at depth 1.5 are 0.1 apart; the corner splat's nearest neighbour is slightly farther.
    EXPECT_NEAR(std::exp(dense[55].logScale.x()), 2.0 * 1.5 / 15.0, 1e-3);

    ImageF bad = depth;
    bad.at(3, 4) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(initGaussiansFromRgbd(color, bad, full, cam, {}), InvalidArgument);
    EXPECT_THROW(initGaussiansFromRgbd(color, ImageF(3, 3, 1), full, cam, {}), InvalidArgument);
}

TEST(DepthInit, RenderedDepthRoundTrip) {
    const auto &c   = floorCase(30);
    const auto &cam = c.trajectory.cameras[0];
    const auto view = renderVirtualViews(c.synth.scene, c.removal.scene, {cam}, {1})[0];
    const auto ref  = render(c.truth, cam, {.channels = kColor | kDepth | kAlpha});
    const ImageF depth = ref.normalizedDepth();
    const auto init    = initGaussiansFromRgbd(ref.color, depth, view.mask, cam, {});
    GaussianScene added;
    added.gaussians = init;
    const auto back = render(added, cam, {.channels = kDepth | kAlpha}).normalizedDepth();
    std::vector<double> errs;
    for (std::size_t p = 0; p < view.mask.pixelCount(); ++p) {
        if (view.mask.data()[p] && depth.data()[p] > 0.0) {
            errs.push_back(std::abs(back.data()[p] - depth.data()[p]) / depth.data()[p]);
        }
    }
    ASSERT_GT(errs.size(), 100u);
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    EXPECT_LT(errs[errs.size() / 2], 0.02);
}

TEST(InpaintLossTest, PureL1WhenLambdaZero) {
    std::mt19937_64 rng(11);
    const auto a = randomImage(rng, 15, 11, 3), b = randomImage(rng, 15, 11, 3);
    const auto m = randomMask(rng, 15, 11, 0.4);
    InpaintConfig cfg;
    cfg.lambda1 = 0.0;
    double direct = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < m.pixelCount(); ++p) {
        if (m.data()[p]) {
            ++n;
            for (int k = 0; k < 3; ++k) {
                direct += std::abs(a.data()[3 * p + k] - b.data()[3 * p + k]);
            }
        }
    }
    direct /= 3.0 * static_cast<double>(n);
    const auto l = inpaintLoss(a, b, m, cfg);
    EXPECT_NEAR(l.total, direct, 1e-12);
    EXPECT_NEAR(l.l1, direct, 1e-12);
    EXPECT_EQ(l.perceptual, 0.0);

    cfg.lambda1 = 0.2;
    const auto mixed = inpaintLoss(a, b, m, cfg);
    EXPECT_NEAR(mixed.total, 0.8 * direct + 0.2 * dssim(b, a), 1e-12);
    EXPECT_THROW(inpaintLoss(a, ImageF(15, 11, 1), m, cfg), InvalidArgument);
}

TEST(InpaintLossTest, PerceptualHookWeightedByLambda2) {
    std::mt19937_64 rng(12);
    const auto a = randomImage(rng, 8, 6, 3), b = randomImage(rng, 8, 6, 3);
    const Mask m(8, 6, 1, 1);
    InpaintConfig cfg;
    cfg.perceptual = [](const ImageF &r, const ImageF &t, const Mask &, ImageF *g) {
        double s = 0.0;
        if (g) {
            *g = ImageF(r.width(), r.height(), 3);
        }
        for (std::size_t i = 0; i < r.data().size(); ++i) {
            const double d = r.data()[i] - t.data()[i];
            s += d * d;
            if (g) {
                g->data()[i] = 2.0 * d;
            }
        }
        return s;
    };
    ImageF grad, plainGrad;
    const auto l = inpaintLoss(a, b, m, cfg, &grad);
    InpaintConfig plain;
    const auto p = inpaintLoss(a, b, m, plain, &plainGrad);
    EXPECT_NEAR(l.total, p.total + 0.005 * l.perceptual, 1e-12);
    EXPECT_NEAR(grad.data()[5] - plainGrad.data()[5], 0.005 * 2.0 * (a.data()[5] - b.data()[5]), 1e-12);
}

TEST(InpaintLossTest, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(13);
    const Camera cam = makeCamera(20, 15, 22.0);
    const InpaintConfig cfg;
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        auto scene = randomScene(rng, 1 + trial % 10);
        // Residuals kept at least 0.02 from zero so a step of h never crosses an L1 kink.
        auto target = render(scene, cam).color;
        std::uniform_real_distribution<double> off(0.02, 0.3);
        std::bernoulli_distribution sign(0.5);
        for (auto &v: target.data()) {
            v += sign(rng) ? off(rng) : -off(rng);
        }
        const auto mask   = randomMask(rng, cam.width, cam.height, 0.5);
        auto loss         = [&] { return inpaintLoss(render(scene, cam).color, target, mask, cfg).total; };
        const auto out    = render(scene, cam, {.keepBlendRecords = true});
        ImageF dLdC;
        inpaintLoss(out.color, target, mask, cfg, &dLdC);
        const auto grad = backwardAppearance(scene, out, dLdC);
        for (std::size_t i = 0; i < scene.size(); ++i) {
            auto &g = scene.gaussians[i];
            for (int k = 0; k < 3; ++k) {
                const double fd = centralDifference(g.sh[0][k], 1e-4, loss);
                worst           = std::max(worst, relativeError(grad.shDc[i][k], fd));
            }
            const double fd = centralDifference(g.opacityRaw, 1e-4, loss);
            worst           = std::max(worst, relativeError(grad.opacityRaw[i], fd));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Optimize, ZeroIterationsReturnsInitAndErrors) {
    std::mt19937_64 rng(14);
    const Camera cam   = makeCamera(16, 12, 18.0);
    const auto scene   = randomScene(rng, 6);
    const auto target  = randomImage(rng, 16, 12, 3);
    const Mask mask(16, 12, 1, 1);
    InpaintConfig cfg;
    cfg.iterations   = 0;
    cfg.pruneOpacity = 0.0;
    EXPECT_TRUE(bitwiseEqual(optimizeInpaint(scene, 3, {cam}, {target}, {mask}, cfg), scene));
    EXPECT_THROW(optimizeInpaint(scene, 6, {cam}, {target}, {mask}, cfg), InvalidArgument);
    EXPECT_THROW(optimizeInpaint(scene, 3, {}, {}, {}, cfg), InvalidArgument);
    EXPECT_THROW(optimizeInpaint(scene, 3, {cam}, {target}, {}, cfg), InvalidArgument);
    cfg.lambda1 = 1.5;
    EXPECT_THROW(optimizeInpaint(scene, 3, {cam}, {target}, {mask}, cfg), InvalidArgument);
}

TEST(Optimize, OnlyNewAppearanceChanges) {
    std::mt19937_64 rng(15);
    const Camera cam  = makeCamera(16, 12, 18.0);
    const auto scene  = randomScene(rng, 8);
    const auto target = randomImage(rng, 16, 12, 3);
    const Mask mask(16, 12, 1, 1);
    InpaintConfig cfg;
    cfg.iterations   = 40;
    cfg.pruneOpacity = 0.0;
    std::vector<double> losses;
    const auto out = optimizeInpaint(scene, 5, {cam}, {target}, {mask}, cfg,
                                     [&](const OptimizeStep &s) { losses.push_back(s.loss.total); });
    ASSERT_EQ(out.size(), scene.size());
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_TRUE(bitwiseEqual(out.gaussians[i], scene.gaussians[i]));
    }
    for (std::size_t i = 5; i < 8; ++i) {
        EXPECT_EQ(out.gaussians[i].position, scene.gaussians[i].position);
        EXPECT_EQ(out.gaussians[i].logScale, scene.gaussians[i].logScale);
        EXPECT_EQ(out.gaussians[i].rotation, scene.gaussians[i].rotation);
        EXPECT_EQ(out.gaussians[i].feature, scene.gaussians[i].feature);
    }
    ASSERT_EQ(losses.size(), 40u);
    EXPECT_LT(losses.back(), losses.front());
    EXPECT_TRUE(bitwiseEqual(optimizeInpaint(scene, 5, {cam}, {target}, {mask}, cfg), out));
}

TEST(Optimize, PrunesTransparentNewSplats) {
    std::mt19937_64 rng(16);
    const Camera cam = makeCamera(16, 12, 18.0);
    auto scene       = randomScene(rng, 4);
    scene.gaussians[3].opacityRaw = -12.0;
    InpaintConfig cfg;
    cfg.iterations = 0;
    const auto out = optimizeInpaint(scene, 2, {cam}, {randomImage(rng, 16, 12, 3)}, {Mask(16, 12, 1, 1)}, cfg);
    EXPECT_EQ(out.size(), 3u);
}

TEST(Pipeline, FloorSceneShortRun) {
    const auto &c = floorCase(30);
    InpaintConfig cfg;
    cfg.iterations = 200;
    BuiltinInpainter builtin;
    std::vector<std::string> stages;
    const auto res = inpaintScene(c.synth.scene, c.removal.scene, c.trajectory.cameras, {1}, builtin, cfg, true,
                                  [&](const InpaintProgress &p) {
                                      if (stages.empty() || stages.back() != p.stage) {
                                          stages.push_back(p.stage);
                                      }
                                  });
    EXPECT_EQ(stages, (std::vector<std::string>{"inpaint", "init", "optimize"}));
    ASSERT_GT(res.initialized, 100u);
    EXPECT_EQ(res.scene.size(), c.removal.scene.size() + res.initialized - res.pruned);
    for (std::size_t i = 0; i < c.removal.scene.size(); ++i) {
        ASSERT_TRUE(bitwiseEqual(res.scene.gaussians[i], c.removal.scene.gaussians[i]));
    }
    for (std::size_t i = c.removal.scene.size(); i < res.scene.size(); ++i) {
        EXPECT_EQ(res.scene.gaussians[i].objectId, ObjectId(0));
    }
    EXPECT_LT(res.finalLoss, res.initialLoss);

    // Against the object-free scene on a pose between virtual views.
    const auto &cams = c.trajectory.cameras;
    const Camera mid = Camera::lookAt(0.5 * (cams[3].center() + cams[4].center()).eval(), c.trajectory.objectCenter,
                                      c.trajectory.normal, cams[0]);
    const Mask m     = nbsMask(c.synth.scene, c.removal.scene, mid, {1});
    const auto truth = render(c.truth, mid, {.channels = kColor}).color;
    EXPECT_GT(psnr(render(res.scene, mid, {.channels = kColor}).color, truth, &m),
              psnr(render(c.removal.scene, mid, {.channels = kColor}).color, truth, &m) + 10.0);
}
