// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/error.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_scenes.hpp"

using namespace splatedit;

TEST(SynthSpec, TomlRoundTrip) {
    const auto spec = loadSynthSpec(SPLATEDIT_DATA_DIR "/occluder_floor.toml");
    ASSERT_EQ(spec.blobs.size(), 1u);
    ASSERT_EQ(spec.planes.size(), 1u);
    EXPECT_EQ(spec.seed, 5u);
    EXPECT_EQ(spec.blobs[0].count, 500);
    EXPECT_EQ(spec.planes[0].texture, TextureKind::Smooth);
    ASSERT_TRUE(spec.planes[0].hole);
    EXPECT_EQ(spec.planes[0].hole->z(), 0.26);
    EXPECT_EQ(spec.ring.count, 24);

    const auto again = synthSpecFromToml(synthSpecToToml(spec));
    EXPECT_EQ(synthSpecToToml(again), synthSpecToToml(spec));
    EXPECT_TRUE(bitwiseEqual(synthScene(again).scene, synthScene(spec).scene));
}

TEST(SynthSpec, Defaults) {
    const auto spec = synthSpecFromToml("[[blobs]]\ncenter = [1.0, 2.0, 3.0]\n");
    ASSERT_EQ(spec.blobs.size(), 1u);
    EXPECT_EQ(spec.blobs[0].center, Vec3(1, 2, 3));
    EXPECT_EQ(spec.blobs[0].count, 100);
    EXPECT_EQ(spec.ring.count, 8);
    EXPECT_TRUE(spec.planes.empty());
}

TEST(SynthSpec, InvalidInput) {
    EXPECT_THROW(synthSpecFromToml("blobs = ["), LoadError);
    EXPECT_THROW(synthScene(synthSpecFromToml("[[blobs]]\nid = 0\n")), InvalidArgument);
    EXPECT_THROW(synthScene(synthSpecFromToml("[[blobs]]\nopacity = 1.0\n")), InvalidArgument);
    EXPECT_THROW(synthScene(synthSpecFromToml("[[planes]]\naxis_u = [1.0, 0.0, 0.0]\naxis_v = [1.0, 1.0, 0.0]\n")),
                 InvalidArgument);
    EXPECT_THROW(synthScene(synthSpecFromToml("[ring]\ncount = 0\n")), InvalidArgument);
    EXPECT_THROW(synthSpecFromToml("[[planes]]\ntexture = \"plaid\"\n"), LoadError);
    EXPECT_THROW(loadSynthSpec("/nonexistent/spec.toml"), IoError);
}

TEST(Synth, DeterministicAndCounted) {
    const auto spec = loadSynthSpec(SPLATEDIT_DATA_DIR "/two_blobs.toml");
    const auto a = synthScene(spec), b = synthScene(spec);
    EXPECT_TRUE(bitwiseEqual(a.scene, b.scene));
    EXPECT_EQ(a.labels, b.labels);
    std::size_t expected = 0;
    for (const auto &blob: spec.blobs) {
        expected += blob.count;
    }
    EXPECT_EQ(a.scene.size(), expected);
    EXPECT_EQ(a.cameras.size(), static_cast<std::size_t>(spec.ring.count));
    EXPECT_EQ(a.labels.size(), a.cameras.size());

    auto other = spec;
    other.seed += 1;
    EXPECT_FALSE(bitwiseEqual(synthScene(other).scene, a.scene));
}

TEST(Synth, PlaneHoleAndBackgroundOnly) {
    const auto spec = loadSynthSpec(SPLATEDIT_DATA_DIR "/occluder_floor.toml");
    const auto s    = synthScene(spec);
    const auto &p   = spec.planes[0];
    const double r  = p.hole->z();
    std::size_t planeSplats = 0;
    for (const auto &g: s.scene.gaussians) {
        if (g.objectId == 0) {
            ++planeSplats;
            EXPECT_NEAR(g.position.z(), 0.0, 1e-12);
            EXPECT_GE(std::hypot(g.position.x(), g.position.y()), r - 1e-12);
        }
    }
    const int n = static_cast<int>(std::floor(p.halfExtent.x() / p.spacing + 1e-9));
    EXPECT_LT(planeSplats, static_cast<std::size_t>((2 * n + 1) * (2 * n + 1)));

    const auto bg = synthScene(backgroundOnly(spec));
    EXPECT_EQ(bg.scene.size(), static_cast<std::size_t>((2 * n + 1) * (2 * n + 1)));
    for (const auto &g: bg.scene.gaussians) {
        EXPECT_EQ(g.objectId, std::optional<ObjectId>(0));
    }
    for (const auto &labels: bg.labels) {
        for (const auto v: labels.data()) {
            ASSERT_EQ(v, 0);
        }
    }
}

TEST(RingCameras, LookAtTargetOnCircle) {
    CameraRingSpec ring;
    ring.count     = 12;
    ring.radius    = 2.5;
    ring.elevation = 0.7;
    ring.target    = Vec3(0.3, -0.2, 0.1);
    const auto cams = ringCameras(ring, 0.1);
    ASSERT_EQ(cams.size(), 12u);
    EXPECT_EQ(cams[3].name, "view_003");
    for (const auto &c: cams) {
        const Vec3 d = ring.target - c.center();
        EXPECT_LT((d.normalized() - c.forward()).norm(), 1e-12);
        EXPECT_NEAR(c.center().z() - ring.target.z(), ring.elevation, 1e-12);
        const Vec3 flat(c.center().x() - ring.target.x(), c.center().y() - ring.target.y(), 0.0);
        EXPECT_NEAR(flat.norm(), ring.radius, 1e-12);
        EXPECT_LT(c.down().z(), 0.0);
        EXPECT_EQ(c.cx, 0.5 * (ring.width - 1));
        const Vec2 px = c.projectCameraPoint(c.toCamera(ring.target));
        EXPECT_NEAR(px.x(), c.cx, 1e-9);
        EXPECT_NEAR(px.y(), c.cy, 1e-9);
    }
}

TEST(ReferenceLabels, AgreeWithRasterizerIds) {
    const auto s = synthScene(loadSynthSpec(SPLATEDIT_DATA_DIR "/five_blobs.toml"));
    std::size_t same = 0, total = 0;
    for (std::size_t v = 0; v < s.cameras.size(); v += 3) {
        const auto ids = render(s.scene, s.cameras[v], {.channels = kIds}).ids;
        for (std::size_t p = 0; p < ids.pixelCount(); ++p) {
            same += ids.data()[p] == s.labels[v].data()[p];
            ++total;
        }
    }
    // Only the footprint cutoff separates the two.
    EXPECT_GT(static_cast<double>(same) / total, 0.995);
}

TEST(ReferenceLabels, SingleOpaqueSplat) {
    GaussianScene scene;
    Gaussian g;
    g.position   = Vec3(0, 0, 2);
    g.logScale   = Vec3::Constant(std::log(0.1));
    g.opacityRaw = 5.0;
    g.objectId   = 7;
    scene.gaussians.push_back(g);
    const auto cam    = splatedit::testing::makeCamera(21, 21, 40);
    const auto labels = referenceLabelMap(scene, cam);
    EXPECT_EQ(labels.at(10, 10), 7);
    EXPECT_EQ(labels.at(0, 0), 0);
    // Coverage >= 0.5 where opacity * exp(-d^2 / 2s^2) >= 0.5, s = 2 px (plus low-pass).
    const double s2    = 4.0 + 0.3;
    const double reach = std::sqrt(2.0 * s2 * std::log(sigmoid(5.0) / 0.5));
    for (int x = 0; x < 21; ++x) {
        const double d = std::abs(x - 10.0);
        if (std::abs(d - reach) > 0.05) {
            EXPECT_EQ(labels.at(x, 10) == 7, d < reach) << x;
        }
    }
}
