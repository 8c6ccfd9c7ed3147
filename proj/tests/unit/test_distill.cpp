// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/distill.hpp>
#include <splatedit/error.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_scenes.hpp"

using namespace splatedit;
using namespace splatedit::testing;

namespace {

Classifier
randomClassifier(std::mt19937_64 &rng, int q) {
    std::normal_distribution<double> n(0.0, 0.5);
    Classifier c;
    c.weight = Eigen::MatrixXd(q, kFeatureDim);
    c.bias   = Eigen::VectorXd(q);
    for (Eigen::Index i = 0; i < c.weight.size(); ++i) {
        c.weight.data()[i] = n(rng);
    }
    for (int i = 0; i < q; ++i) {
        c.bias[i] = n(rng);
    }
    return c;
}

// Objective evaluated through the forward renderer, independently of blend records.
double
renderedObjective(const GaussianScene &scene, const Camera &cam, const LabelMap &labels, const NeighborGraph &graph,
                  double lambda) {
    const auto out = render(scene, cam, {.channels = kFeature});
    const auto cls = classify(out.feature, *scene.classifier);
    std::vector<Feature> f;
    for (const auto &g: scene.gaussians) {
        f.push_back(g.feature);
    }
    return lossObj(cls.probabilities, labels) + lambda * lossSpace(f, graph);
}

} // namespace

TEST(Classify, SoftmaxAndArgmax) {
    Classifier c;
    c.weight = Eigen::MatrixXd::Zero(3, kFeatureDim);
    c.bias   = Eigen::Vector3d(0.0, 1.0, 1.0);
    c.weight(0, 0) = 2.0;
    ImageF f(2, 1, kFeatureDim);
    f.at(0, 0, 0) = 1.0; // logits (2, 1, 1)
    const auto r  = classify(f, c);
    const double e = std::exp(1.0);
    EXPECT_NEAR(r.probabilities.at(0, 0, 0), e * e / (e * e + 2 * e), 1e-15);
    EXPECT_EQ(r.labels.at(0, 0), 0);
    EXPECT_EQ(r.labels.at(1, 0), 1); // tie between 1 and 2
    double sum = 0.0;
    for (int q = 0; q < 3; ++q) {
        sum += r.probabilities.at(1, 0, q);
    }
    EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(LossObj, UniformAndPerfect) {
    ImageF p(3, 2, 4, 0.25);
    LabelMap l(3, 2, 1);
    l.at(1, 1) = 3;
    EXPECT_NEAR(lossObj(p, l), std::log(4.0), 1e-15);
    ImageF sure(1, 1, 2);
    sure.at(0, 0, 1) = 1.0;
    LabelMap one(1, 1, 1, 1);
    EXPECT_EQ(lossObj(sure, one), 0.0);
}

TEST(LossSpace, HandCasesAndGradient) {
    Feature a{}, b{};
    a[0] = 1.0;
    b[0] = -2.0;
    const NeighborGraph g{{1}, {0}};
    EXPECT_NEAR(lossSpace({a, a}, g), 0.0, 1e-15);
    EXPECT_NEAR(lossSpace({a, b}, g), 2.0, 1e-15);
    b    = {};
    b[1] = 3.0;
    EXPECT_NEAR(lossSpace({a, b}, g), 1.0, 1e-15);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Feature> f(12);
    for (auto &x: f) {
        for (auto &v: x) {
            v = n(rng);
        }
    }
    NeighborGraph graph(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        graph[i] = {static_cast<std::uint32_t>((i + 1) % f.size()), static_cast<std::uint32_t>((i + 5) % f.size())};
    }
    const auto grad = lossSpaceGradient(f, graph);
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (int k = 0; k < kFeatureDim; ++k) {
            const double fd = centralDifference(f[i][k], 1e-5, [&] { return lossSpace(f, graph); });
            EXPECT_LT(relativeError(grad[i][k], fd), 1e-6);
        }
    }
}

TEST(NeighborGraph, MatchesBruteForce) {
    std::mt19937_64 rng(4);
    const auto scene = randomScene(rng, 200);
    const auto graph = buildNeighborGraph(scene, 5);
    ASSERT_EQ(graph.size(), scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        std::vector<std::pair<double, std::uint32_t>> d;
        for (std::size_t j = 0; j < scene.size(); ++j) {
            if (j != i) {
                d.emplace_back((scene.gaussians[i].position - scene.gaussians[j].position).squaredNorm(),
                               static_cast<std::uint32_t>(j));
            }
        }
        std::sort(d.begin(), d.end());
        std::vector<std::uint32_t> want;
        for (int k = 0; k < 5; ++k) {
            want.push_back(d[k].second);
        }
        auto got = graph[i];
        std::sort(want.begin(), want.end());
        std::sort(got.begin(), got.end());
        EXPECT_EQ(got, want);
    }
    EXPECT_EQ(buildNeighborGraph(scene, 5, 4), graph);
}

TEST(DistillGradient, RecordsReproduceFeatureRender) {
    std::mt19937_64 rng(6);
    auto scene     = randomScene(rng, 30);
    const auto cam = makeCamera(40, 30, 35);
    const auto out = render(scene, cam, {.channels = kFeature, .keepBlendRecords = true});
    const auto F   = featuresFromRecords(scene, *out.records, cam.width, cam.height);
    for (std::size_t i = 0; i < F.data().size(); ++i) {
        EXPECT_NEAR(F.data()[i], out.feature.data()[i], 1e-12);
    }
}

TEST(DistillGradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> count(1, 10), cls(2, 5);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto scene       = randomScene(rng, count(rng));
        const int Q      = cls(rng);
        scene.classifier = randomClassifier(rng, Q);
        const auto cam   = makeCamera(16, 12, 14);
        LabelMap labels(16, 12, 1);
        std::uniform_int_distribution<int> lab(0, Q - 1);
        for (auto &l: labels.data()) {
            l = static_cast<std::uint16_t>(lab(rng));
        }
        const double lambda = trial % 2 ? 0.0005 : 0.3;
        const auto graph    = buildNeighborGraph(scene, std::min<int>(5, std::max<int>(1, scene.size() - 1)));
        const auto out      = render(scene, cam, {.channels = kAlpha, .keepBlendRecords = true});
        const auto g        = distillGradient(scene, *out.records, labels, graph, lambda);
        EXPECT_NEAR(g.loss.total, renderedObjective(scene, cam, labels, graph, lambda), 1e-12);

        auto f = [&] { return renderedObjective(scene, cam, labels, graph, lambda); };
        for (std::size_t i = 0; i < scene.size(); ++i) {
            for (int k = 0; k < kFeatureDim; k += 3) {
                const double fd = centralDifference(scene.gaussians[i].feature[k], 1e-4, f);
                worst           = std::max(worst, relativeError(g.features[i][k], fd));
            }
        }
        auto &W = scene.classifier->weight;
        for (int q = 0; q < Q; ++q) {
            for (int k = 0; k < kFeatureDim; k += 5) {
                worst = std::max(worst, relativeError(g.weight(q, k), centralDifference(W(q, k), 1e-4, f)));
            }
            worst = std::max(worst, relativeError(g.bias[q], centralDifference(scene.classifier->bias[q], 1e-4, f)));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Distill, TwoBlobsAndDeterminism) {
    const auto s = synthScene(loadSynthSpec(SPLATEDIT_DATA_DIR "/two_blobs.toml"));
    GaussianScene plain = s.scene;
    for (auto &g: plain.gaussians) {
        g.objectId.reset();
    }
    DistillConfig cfg;
    cfg.iterations = 300;
    cfg.seed       = 1;
    std::vector<double> losses;
    const auto a = distill(plain, s.cameras, s.labels, cfg, [&](const DistillStep &st) {
        losses.push_back(st.loss.total);
        EXPECT_EQ(st.iteration, static_cast<int>(losses.size()) - 1);
    });
    ASSERT_EQ(losses.size(), 300u);
    EXPECT_LT(losses.back(), 0.5 * losses.front());
    ASSERT_TRUE(a.classifier);
    EXPECT_EQ(a.classifier->classes(), 3);
    std::size_t good = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        good += a.gaussians[i].objectId == s.scene.gaussians[i].objectId;
        EXPECT_EQ(a.gaussians[i].position, plain.gaussians[i].position);
    }
    EXPECT_GE(static_cast<double>(good) / a.size(), 0.97);
    EXPECT_TRUE(bitwiseEqual(a, distill(plain, s.cameras, s.labels, cfg)));
}

TEST(Distill, ZeroIterationsBakesInitialClassifier) {
    const auto s = synthScene(loadSynthSpec(SPLATEDIT_DATA_DIR "/two_blobs.toml"));
    DistillConfig cfg;
    cfg.iterations = 0;
    cfg.classes    = 4;
    auto out       = distill(s.scene, s.cameras, s.labels, cfg);
    EXPECT_EQ(out.classifier->classes(), 4);
    for (const auto &g: out.gaussians) {
        EXPECT_EQ(*g.objectId, out.classifier->predict(g.feature));
    }
}

TEST(Distill, Errors) {
    const auto cam = makeCamera(8, 6, 8);
    GaussianScene scene;
    scene.gaussians.resize(3);
    DistillConfig cfg;
    EXPECT_THROW(distill(scene, {cam}, {LabelMap(8, 6, 1)}, cfg), InvalidArgument);
    LabelMap l(8, 6, 1, 3);
    EXPECT_THROW(distill(scene, {cam}, {l, l}, cfg), InvalidArgument);
    EXPECT_THROW(distill(scene, {cam}, {LabelMap(4, 4, 1, 1)}, cfg), InvalidArgument);
    cfg.classes = 3;
    EXPECT_THROW(distill(scene, {cam}, {l}, cfg), InvalidArgument);
    cfg.classes = 0;
    cfg.lambda  = -1.0;
    EXPECT_THROW(distill(scene, {cam}, {l}, cfg), InvalidArgument);
    EXPECT_THROW(bakeObjectIds(scene), InvalidArgument);
}
