// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Identity-feature distillation: per-splat features and a linear classifier trained so the
// classified feature render reproduces associated label maps.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/image.hpp>
#include <splatedit/raster.hpp>
#include <splatedit/scene.hpp>

#include <cstdint>
#include <functional>
#include <vector>

namespace splatedit {

struct DistillConfig {
    int iterations      = 2000;
    double lambda       = 0.0005;
    int k               = 5;
    double learningRate = 0.0025;
    std::uint64_t seed  = 0;
    int classes         = 0; // 0: one more than the largest label
    double featureInitStd = 0.3;
    double weightInitStd  = 0.25;
    int threads         = 1;
};

struct Classification {
    ImageF probabilities; // H x W x Q
    LabelMap labels;
};

/// Per-pixel softmax of classifier logits and its argmax (ties to the smaller class).
Classification classify(const ImageF &features, const Classifier &classifier);

/// Mean over all pixels of -log p(label).
double lossObj(const ImageF &probabilities, const LabelMap &labels);

using NeighborGraph = std::vector<std::vector<std::uint32_t>>;

NeighborGraph buildNeighborGraph(const GaussianScene &scene, int k, int threads = 1);

inline constexpr double kCosineEps = 1e-8;

/// Mean over splats of (1 - mean cosine similarity to its neighbours).
double lossSpace(const std::vector<Feature> &features, const NeighborGraph &graph);

/// Gradient of lossSpace w.r.t. every feature.
std::vector<Feature> lossSpaceGradient(const std::vector<Feature> &features, const NeighborGraph &graph);

struct DistillLoss {
    double obj   = 0.0;
    double space = 0.0;
    double total = 0.0;
};

struct DistillGradient {
    DistillLoss loss;
    std::vector<Feature> features;
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

/// Feature map of the current scene features, blended through recorded weights.
ImageF featuresFromRecords(const GaussianScene &scene, const BlendRecords &records, int width, int height);

/// Loss obj + lambda * space for one view and its gradient w.r.t. features and classifier.
/// `records` must come from rendering this scene's geometry from the view.
DistillGradient distillGradient(const GaussianScene &scene, const BlendRecords &records, const LabelMap &labels,
                                const NeighborGraph &graph, double lambda);

struct DistillStep {
    int iteration;
    std::size_t view;
    DistillLoss loss;
};

/// Trains features and classifier with Adam, one random view per step, then bakes each
/// splat's object id as the classifier argmax of its feature. Other fields are untouched.
GaussianScene distill(const GaussianScene &scene, const std::vector<Camera> &cameras,
                      const std::vector<LabelMap> &labels, const DistillConfig &config,
                      const std::function<void(const DistillStep &)> &onStep = {});

/// Object id per splat from the classifier.
void bakeObjectIds(GaussianScene &scene);

} // namespace splatedit
