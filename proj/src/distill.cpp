// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/adam.hpp>
#include <splatedit/distill.hpp>
#include <splatedit/error.hpp>
#include <splatedit/knn.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace splatedit {

namespace {

double
dot(const Feature &a, const Feature &b) {
    double s = 0.0;
    for (int k = 0; k < kFeatureDim; ++k) {
        s += a[k] * b[k];
    }
    return s;
}

/// Log-softmax of logits into `p` (probabilities); returns log-sum-exp.
double
softmax(const Eigen::VectorXd &z, double *p) {
    const double m = z.maxCoeff();
    double sum     = 0.0;
    for (Eigen::Index q = 0; q < z.size(); ++q) {
        p[q] = std::exp(z[q] - m);
        sum += p[q];
    }
    for (Eigen::Index q = 0; q < z.size(); ++q) {
        p[q] /= sum;
    }
    return m + std::log(sum);
}

void
checkClassifier(const Classifier &c) {
    if (c.weight.cols() != kFeatureDim || c.bias.size() != c.weight.rows() || c.weight.rows() < 1) {
        throw InvalidArgument("classifier must be Q x 16 with Q biases, got " + std::to_string(c.weight.rows()) + "x" +
                              std::to_string(c.weight.cols()) + " and " + std::to_string(c.bias.size()));
    }
}

} // namespace

Classification
classify(const ImageF &features, const Classifier &classifier) {
    checkClassifier(classifier);
    if (features.channels() != kFeatureDim) {
        throw InvalidArgument("feature map must have 16 channels, got " + std::to_string(features.channels()));
    }
    const int Q = classifier.classes();
    Classification out{ImageF(features.width(), features.height(), Q), LabelMap(features.width(), features.height(), 1)};
    for (std::size_t px = 0; px < features.pixelCount(); ++px) {
        const Eigen::Map<const Eigen::VectorXd> f(features.data().data() + px * kFeatureDim, kFeatureDim);
        const Eigen::VectorXd z = classifier.weight * f + classifier.bias;
        double *p               = out.probabilities.data().data() + px * Q;
        softmax(z, p);
        out.labels.data()[px] = static_cast<std::uint16_t>(std::max_element(p, p + Q) - p);
    }
    return out;
}

double
lossObj(const ImageF &probabilities, const LabelMap &labels) {
    if (!probabilities.sameSize(labels)) {
        throw InvalidArgument("probability map and label map differ in size");
    }
    const int Q = probabilities.channels();
    double sum  = 0.0;
    for (std::size_t px = 0; px < labels.pixelCount(); ++px) {
        const int l = labels.data()[px];
        if (l >= Q) {
            throw InvalidArgument("label " + std::to_string(l) + " outside the " + std::to_string(Q) + " classes");
        }
        sum -= std::log(probabilities.data()[px * Q + l]);
    }
    return labels.pixelCount() ? sum / static_cast<double>(labels.pixelCount()) : 0.0;
}

NeighborGraph
buildNeighborGraph(const GaussianScene &scene, int k, int threads) {
    if (k < 1) {
        throw InvalidArgument("neighbour count must be >= 1");
    }
    std::vector<Vec3> points(scene.size());
    std::transform(scene.gaussians.begin(), scene.gaussians.end(), points.begin(),
                   [](const Gaussian &g) { return g.position; });
    return knnGraph(points, static_cast<std::size_t>(k), threads);
}

double
lossSpace(const std::vector<Feature> &features, const NeighborGraph &graph) {
    if (features.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto &nb = graph[i];
        if (nb.empty()) {
            total += 1.0;
            continue;
        }
        const double ni = std::sqrt(dot(features[i], features[i]));
        double cosSum   = 0.0;
        for (const auto j: nb) {
            const double denom = ni * std::sqrt(dot(features[j], features[j]));
            if (denom > kCosineEps) {
                cosSum += dot(features[i], features[j]) / denom;
            }
        }
        total += 1.0 - cosSum / static_cast<double>(nb.size());
    }
    return total / static_cast<double>(features.size());
}

std::vector<Feature>
lossSpaceGradient(const std::vector<Feature> &features, const NeighborGraph &graph) {
    std::vector<Feature> grad(features.size(), Feature{});
    const double invN = features.empty() ? 0.0 : 1.0 / static_cast<double>(features.size());
    std::vector<double> norms(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        norms[i] = std::sqrt(dot(features[i], features[i]));
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto &nb = graph[i];
        if (nb.empty()) {
            continue;
        }
        const double scale = -invN / static_cast<double>(nb.size());
        for (const auto j: nb) {
            const double denom = norms[i] * norms[j];
            if (denom <= kCosineEps) {
                continue;
            }
            const double c = dot(features[i], features[j]) / denom;
            for (int k = 0; k < kFeatureDim; ++k) {
                // d cos / d a = b / (|a||b|) - cos * a / |a|^2
                grad[i][k] += scale * (features[j][k] / denom - c * features[i][k] / (norms[i] * norms[i]));
                grad[j][k] += scale * (features[i][k] / denom - c * features[j][k] / (norms[j] * norms[j]));
            }
        }
    }
    return grad;
}

ImageF
featuresFromRecords(const GaussianScene &scene, const BlendRecords &records, int width, int height) {
    ImageF F(width, height, kFeatureDim);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double *f = &F.at(x, y);
            for (const auto &e: records.pixel(x, y)) {
                const auto &feat = scene.gaussians[e.splat].feature;
                for (int k = 0; k < kFeatureDim; ++k) {
                    f[k] += e.weight * feat[k];
                }
            }
        }
    }
    return F;
}

DistillGradient
distillGradient(const GaussianScene &scene, const BlendRecords &records, const LabelMap &labels,
                const NeighborGraph &graph, double lambda) {
    if (!scene.classifier) {
        throw InvalidArgument("distillation needs a classifier");
    }
    const Classifier &cls = *scene.classifier;
    checkClassifier(cls);
    const int Q = cls.classes();
    const int W = labels.width(), H = labels.height();
    const ImageF F = featuresFromRecords(scene, records, W, H);

    DistillGradient g;
    g.weight = Eigen::MatrixXd::Zero(Q, kFeatureDim);
    g.bias   = Eigen::VectorXd::Zero(Q);
    g.features.assign(scene.size(), Feature{});

    const double invP = 1.0 / static_cast<double>(labels.pixelCount());
    std::vector<double> p(Q);
    double obj = 0.0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int l = labels.at(x, y);
            if (l >= Q) {
                throw InvalidArgument("label " + std::to_string(l) + " outside the " + std::to_string(Q) + " classes");
            }
            const Eigen::Map<const Eigen::VectorXd> f(&F.at(x, y), kFeatureDim);
            const Eigen::VectorXd z = cls.weight * f + cls.bias;
            const double lse        = softmax(z, p.data());
            obj += (lse - z[l]) * invP;

            Eigen::VectorXd dz = Eigen::Map<Eigen::VectorXd>(p.data(), Q);
            dz[l] -= 1.0;
            dz *= invP;
            g.weight.noalias() += dz * f.transpose();
            g.bias += dz;
            const Eigen::VectorXd dF = cls.weight.transpose() * dz;
            for (const auto &e: records.pixel(x, y)) {
                auto &gf = g.features[e.splat];
                for (int k = 0; k < kFeatureDim; ++k) {
                    gf[k] += e.weight * dF[k];
                }
            }
        }
    }

    g.loss.obj = obj;
    if (lambda != 0.0) {
        std::vector<Feature> feats(scene.size());
        std::transform(scene.gaussians.begin(), scene.gaussians.end(), feats.begin(),
                       [](const Gaussian &s) { return s.feature; });
        g.loss.space    = lossSpace(feats, graph);
        const auto grad = lossSpaceGradient(feats, graph);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            for (int k = 0; k < kFeatureDim; ++k) {
                g.features[i][k] += lambda * grad[i][k];
            }
        }
    }
    g.loss.total = g.loss.obj + lambda * g.loss.space;
    return g;
}

void
bakeObjectIds(GaussianScene &scene) {
    if (!scene.classifier) {
        throw InvalidArgument("cannot bake object ids without a classifier");
    }
    for (auto &g: scene.gaussians) {
        g.objectId = static_cast<ObjectId>(scene.classifier->predict(g.feature));
    }
}

GaussianScene
distill(const GaussianScene &input, const std::vector<Camera> &cameras, const std::vector<LabelMap> &labels,
        const DistillConfig &config, const std::function<void(const DistillStep &)> &onStep) {
    if (config.iterations < 0 || !(config.lambda >= 0.0) || config.k < 1 || !(config.learningRate > 0.0) ||
        !(config.featureInitStd >= 0.0) || !(config.weightInitStd >= 0.0)) {
        throw InvalidArgument("distill: iterations >= 0, lambda >= 0, k >= 1 and learning rate > 0 required");
    }
    if (cameras.size() != labels.size() || cameras.empty()) {
        throw InvalidArgument("distill: need one label map per camera, got " + std::to_string(labels.size()) +
                              " maps for " + std::to_string(cameras.size()) + " cameras");
    }
    int maxLabel     = 0;
    bool anyLabelled = false;
    for (std::size_t v = 0; v < labels.size(); ++v) {
        if (labels[v].width() != cameras[v].width || labels[v].height() != cameras[v].height) {
            throw InvalidArgument("distill: label map " + std::to_string(v) + " does not match its camera");
        }
        for (std::size_t px = 0; px < labels[v].pixelCount(); ++px) {
            maxLabel    = std::max<int>(maxLabel, labels[v].data()[px]);
            anyLabelled = anyLabelled || labels[v].data()[px] != 0;
        }
    }
    if (!anyLabelled) {
        throw InvalidArgument("distill: no labelled pixels in any view");
    }
    const int Q = config.classes > 0 ? config.classes : maxLabel + 1;
    if (Q < 2 || Q > kMaxClasses || maxLabel >= Q) {
        throw InvalidArgument("distill: class count " + std::to_string(Q) + " must lie in [2, 256] and exceed every label");
    }

    GaussianScene scene = input;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto &g: scene.gaussians) {
        for (auto &v: g.feature) {
            v = config.featureInitStd * normal(rng);
        }
    }
    Classifier cls;
    cls.weight = Eigen::MatrixXd(Q, kFeatureDim);
    for (Eigen::Index i = 0; i < cls.weight.size(); ++i) {
        cls.weight.data()[i] = config.weightInitStd * normal(rng);
    }
    cls.bias = Eigen::VectorXd::Zero(Q);
    scene.classifier = cls;

    const NeighborGraph graph = buildNeighborGraph(scene, config.k, config.threads);
    const std::size_t nf      = scene.size() * kFeatureDim;
    const std::size_t nw      = static_cast<std::size_t>(Q) * kFeatureDim;
    std::vector<double> params(nf + nw + Q), grads(params.size());
    Adam adam(params.size(), config.learningRate);

    std::vector<std::optional<BlendRecords>> cache(cameras.size());
    std::uniform_int_distribution<std::size_t> pick(0, cameras.size() - 1);

    for (int it = 0; it < config.iterations; ++it) {
        const std::size_t v = pick(rng);
        if (!cache[v]) {
            auto out = render(scene, cameras[v], {.channels = kAlpha, .keepBlendRecords = true, .threads = config.threads});
            cache[v] = std::move(*out.records);
        }
        const DistillGradient g = distillGradient(scene, *cache[v], labels[v], graph, config.lambda);
        if (onStep) {
            onStep({it, v, g.loss});
        }

        auto &W = scene.classifier->weight;
        auto &b = scene.classifier->bias;
        for (std::size_t i = 0; i < scene.size(); ++i) {
            std::copy(scene.gaussians[i].feature.begin(), scene.gaussians[i].feature.end(), params.begin() + i * kFeatureDim);
            std::copy(g.features[i].begin(), g.features[i].end(), grads.begin() + i * kFeatureDim);
        }
        std::copy(W.data(), W.data() + nw, params.begin() + nf);
        std::copy(g.weight.data(), g.weight.data() + nw, grads.begin() + nf);
        std::copy(b.data(), b.data() + Q, params.begin() + nf + nw);
        std::copy(g.bias.data(), g.bias.data() + Q, grads.begin() + nf + nw);

        adam.step(params, grads);

        for (std::size_t i = 0; i < scene.size(); ++i) {
            std::copy(params.begin() + i * kFeatureDim, params.begin() + (i + 1) * kFeatureDim,
                      scene.gaussians[i].feature.begin());
        }
        std::copy(params.begin() + nf, params.begin() + nf + nw, W.data());
        std::copy(params.begin() + nf + nw, params.end(), b.data());
    }
    bakeObjectIds(scene);
    return scene;
}

} // namespace splatedit
