// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/edit.hpp>
#include <splatedit/error.hpp>
#include <splatedit/hull.hpp>
#include <splatedit/morphology.hpp>
#include <splatedit/raster.hpp>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace splatedit {

std::optional<ObjectId>
pickObject(const GaussianScene &scene, const Camera &camera, int x, int y) {
    if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) {
        throw InvalidArgument("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") is outside the " +
                              std::to_string(camera.width) + "x" + std::to_string(camera.height) + " image");
    }
    const auto out    = render(scene, camera, {.channels = kIds});
    const ObjectId id = out.ids.at(x, y);
    if (id == 0) {
        return std::nullopt;
    }
    return id;
}

Removal
removeObjects(const GaussianScene &scene, const std::vector<ObjectId> &ids, bool hull) {
    std::set<ObjectId> wanted(ids.begin(), ids.end());
    if (wanted.empty()) {
        throw InvalidArgument("no object ids given for removal");
    }
    std::map<ObjectId, std::size_t> counts;
    for (const auto &g: scene.gaussians) {
        if (g.objectId && wanted.count(*g.objectId)) {
            ++counts[*g.objectId];
        }
    }
    for (const ObjectId id: wanted) {
        if (id == 0 || !counts.count(id)) {
            throw UnknownObject("unknown object id " + std::to_string(id));
        }
    }

    std::vector<char> drop(scene.size(), 0);
    std::vector<Vec3> centres;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto &g = scene.gaussians[i];
        if (g.objectId && wanted.count(*g.objectId)) {
            drop[i] = 1;
            centres.push_back(g.position);
        }
    }
    Removal result;
    if (hull) {
        if (const auto h = ConvexHull::build(centres)) {
            for (std::size_t i = 0; i < scene.size(); ++i) {
                if (!drop[i] && h->contains(scene.gaussians[i].position)) {
                    drop[i] = 1;
                    ++result.record.hullCaptured;
                }
            }
        }
    }

    auto &rec        = result.record;
    rec.ids          = {wanted.begin(), wanted.end()};
    rec.originalSize = scene.size();
    result.scene     = scene;
    result.scene.gaussians.clear();
    result.scene.gaussians.reserve(scene.size() - centres.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (drop[i]) {
            rec.indices.push_back(static_cast<std::uint32_t>(i));
            rec.removed.push_back(scene.gaussians[i]);
        } else {
            result.scene.gaussians.push_back(scene.gaussians[i]);
        }
    }
    return result;
}

GaussianScene
restoreRemoval(const GaussianScene &edited, const RemovalRecord &rec) {
    if (rec.indices.size() != rec.removed.size() || edited.size() + rec.removed.size() != rec.originalSize) {
        throw InvalidArgument("removal record does not match the scene (" + std::to_string(edited.size()) + " + " +
                              std::to_string(rec.removed.size()) + " splats, expected " +
                              std::to_string(rec.originalSize) + ")");
    }
    GaussianScene out = edited;
    out.gaussians.clear();
    out.gaussians.reserve(rec.originalSize);
    std::size_t kept = 0, removed = 0;
    for (std::size_t i = 0; i < rec.originalSize; ++i) {
        if (removed < rec.indices.size() && rec.indices[removed] == i) {
            out.gaussians.push_back(rec.removed[removed++]);
        } else {
            out.gaussians.push_back(edited.gaussians[kept++]);
        }
    }
    if (removed != rec.indices.size()) {
        throw InvalidArgument("removal record indices are not ascending or exceed the scene size");
    }
    return out;
}

namespace {

nlohmann::json
gaussianToJson(const Gaussian &g) {
    auto vec = [](const auto &v) {
        std::vector<double> out(v.size());
        for (int i = 0; i < v.size(); ++i) {
            out[i] = v[i];
        }
        return out;
    };
    nlohmann::json sh = nlohmann::json::array();
    for (const auto &c: g.sh) {
        sh.push_back(vec(c));
    }
    nlohmann::json j{{"position", vec(g.position)},   {"log_scale", vec(g.logScale)},
                     {"rotation", vec(g.rotation)},   {"opacity_raw", g.opacityRaw},
                     {"sh", sh},                      {"feature", g.feature}};
    j["object_id"] = g.objectId ? nlohmann::json(*g.objectId) : nlohmann::json(nullptr);
    return j;
}

Gaussian
gaussianFromJson(const nlohmann::json &j) {
    Gaussian g;
    auto read = [](const nlohmann::json &a, auto &v) {
        const auto values = a.get<std::vector<double>>();
        if (values.size() != static_cast<std::size_t>(v.size())) {
            throw LoadError("removal record: vector of wrong length");
        }
        for (int i = 0; i < v.size(); ++i) {
            v[i] = values[i];
        }
    };
    read(j.at("position"), g.position);
    read(j.at("log_scale"), g.logScale);
    read(j.at("rotation"), g.rotation);
    g.opacityRaw = j.at("opacity_raw").get<double>();
    const auto &sh = j.at("sh");
    if (sh.size() != g.sh.size()) {
        throw LoadError("removal record: expected 16 SH coefficients");
    }
    for (std::size_t k = 0; k < g.sh.size(); ++k) {
        read(sh[k], g.sh[k]);
    }
    g.feature = j.at("feature").get<Feature>();
    if (!j.at("object_id").is_null()) {
        g.objectId = j.at("object_id").get<ObjectId>();
    }
    return g;
}

} // namespace

nlohmann::json
removalToJson(const RemovalRecord &rec) {
    nlohmann::json removed = nlohmann::json::array();
    for (const auto &g: rec.removed) {
        removed.push_back(gaussianToJson(g));
    }
    return {{"ids", rec.ids},
            {"indices", rec.indices},
            {"hull_captured", rec.hullCaptured},
            {"original_size", rec.originalSize},
            {"removed", removed}};
}

RemovalRecord
removalFromJson(const nlohmann::json &j) {
    RemovalRecord rec;
    try {
        rec.ids          = j.at("ids").get<std::vector<ObjectId>>();
        rec.indices      = j.at("indices").get<std::vector<std::uint32_t>>();
        rec.hullCaptured = j.at("hull_captured").get<std::size_t>();
        rec.originalSize = j.at("original_size").get<std::size_t>();
        for (const auto &g: j.at("removed")) {
            rec.removed.push_back(gaussianFromJson(g));
        }
    } catch (const nlohmann::json::exception &e) {
        throw LoadError(std::string("removal record: ") + e.what());
    }
    return rec;
}

Vec3
objectCenter(const GaussianScene &scene, ObjectId id) {
    Vec3 sum          = Vec3::Zero();
    std::size_t count = 0;
    for (const auto &g: scene.gaussians) {
        if (g.objectId == id) {
            sum += g.position;
            ++count;
        }
    }
    if (count == 0 || id == 0) {
        throw UnknownObject("unknown object id " + std::to_string(id));
    }
    return sum / static_cast<double>(count);
}

Mask
nbsMask(const GaussianScene &before, const GaussianScene &after, const Camera &camera,
        const std::vector<ObjectId> &removedIds, const NbsOptions &options) {
    const auto b = render(before, camera, {.channels = kIds});
    const auto a = render(after, camera, {.channels = kIds | kAlpha});
    const std::set<ObjectId> removed(removedIds.begin(), removedIds.end());
    Mask raw(camera.width, camera.height, 1);
    for (std::size_t p = 0; p < raw.pixelCount(); ++p) {
        const ObjectId id = b.ids.data()[p];
        raw.data()[p] = id != 0 && removed.count(id) && a.ids.data()[p] != id && a.alpha.data()[p] < options.alphaThreshold;
    }
    return dilate(close(raw, options.closeRadius), options.dilateRadius);
}

namespace {

double
maskFraction(const Mask &m) {
    return static_cast<double>(maskArea(m)) / static_cast<double>(m.pixelCount());
}

} // namespace

Trajectory
virtualTrajectory(const GaussianScene &before, const GaussianScene &after, const std::vector<Camera> &training,
                  const std::vector<ObjectId> &ids, const TrajectoryOptions &options) {
    if (training.size() < 3) {
        throw InvalidArgument("virtual trajectory needs at least 3 training cameras, got " +
                              std::to_string(training.size()));
    }
    if (options.views < 1 || !(options.keepFraction > 0.0 && options.keepFraction <= 1.0) ||
        !(options.minArea < options.maxArea) || !(options.minRadiusFactor > 0.0) ||
        !(options.minRadiusFactor < options.maxRadiusFactor)) {
        throw InvalidArgument("invalid trajectory options");
    }
    if (ids.empty()) {
        throw InvalidArgument("virtual trajectory needs an object id");
    }
    Trajectory traj;
    Vec3 sum          = Vec3::Zero();
    std::size_t count = 0;
    for (const ObjectId id: ids) {
        const Vec3 c = objectCenter(before, id);
        std::size_t n = 0;
        for (const auto &g: before.gaussians) {
            n += g.objectId == id;
        }
        sum += c * static_cast<double>(n);
        count += n;
    }
    const Vec3 o      = sum / static_cast<double>(count);
    traj.objectCenter = o;

    std::vector<std::size_t> order(training.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (training[a].center() - o).norm() < (training[b].center() - o).norm();
    });
    const std::size_t keep = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(options.keepFraction * training.size())), 3, training.size());
    order.resize(keep);
    std::sort(order.begin(), order.end());

    Vec3 mean = Vec3::Zero(), upSum = Vec3::Zero();
    for (auto i: order) {
        mean += training[i].center();
        upSum -= training[i].down();
    }
    mean /= static_cast<double>(keep);
    Mat3 cov = Mat3::Zero();
    for (auto i: order) {
        const Vec3 d = training[i].center() - mean;
        cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(upSum) < 0.0) {
        n = -n;
    }
    traj.normal = n;

    double height = 0.0, distance = 0.0;
    for (auto i: order) {
        const Vec3 d = training[i].center() - o;
        height += n.dot(d);
        distance += d.norm();
    }
    height /= static_cast<double>(keep);
    distance /= static_cast<double>(keep);
    traj.circleCenter = o + height * n;

    Vec3 e1 = training[order.front()].center() - traj.circleCenter;
    e1 -= n * n.dot(e1);
    if (e1.norm() < 1e-12 * std::max(1.0, distance)) {
        e1 = n.unitOrthogonal();
    }
    e1.normalize();
    const Vec3 e2 = n.cross(e1);

    double inPlane = 0.0;
    for (auto i: order) {
        const Vec3 d = training[i].center() - traj.circleCenter;
        inPlane += (d - n * n.dot(d)).norm();
    }
    inPlane /= static_cast<double>(keep);

    const Camera &intr = training.front();
    auto cameraAt      = [&](double radius, int k) {
        const double a = 2.0 * std::numbers::pi * k / options.views;
        const Vec3 eye = traj.circleCenter + radius * (std::cos(a) * e1 + std::sin(a) * e2);
        Camera cam     = Camera::lookAt(eye, o, n, intr);
        char name[32];
        std::snprintf(name, sizeof name, "virtual_%03d", k);
        cam.name = name;
        return cam;
    };

    const double lo0 = options.minRadiusFactor * distance, hi0 = options.maxRadiusFactor * distance;
    double lo = lo0, hi = hi0;
    double radius     = std::clamp(inPlane, lo0, hi0);
    double bestRadius = radius, bestGap = std::numeric_limits<double>::infinity(), bestFraction = 0.0;
    for (int step = 0; step <= options.maxBisectionSteps; ++step) {
        const double f   = maskFraction(nbsMask(before, after, cameraAt(radius, 0), ids, options.nbs));
        const double gap = f < options.minArea ? options.minArea - f : (f > options.maxArea ? f - options.maxArea : 0.0);
        if (gap < bestGap) {
            bestGap      = gap;
            bestRadius   = radius;
            bestFraction = f;
        }
        if (gap == 0.0) {
            break;
        }
        if (f > options.maxArea) {
            lo = radius; // too close
        } else {
            hi = radius;
        }
        radius = 0.5 * (lo + hi);
    }
    if (bestGap > 0.0) {
        traj.warnings.push_back("NBS mask area " + std::to_string(100.0 * bestFraction) +
                                "% could not be brought into [" + std::to_string(100.0 * options.minArea) + "%, " +
                                std::to_string(100.0 * options.maxArea) + "%]");
    }
    traj.radius       = bestRadius;
    traj.maskFraction = bestFraction;
    for (int k = 0; k < options.views; ++k) {
        traj.cameras.push_back(cameraAt(bestRadius, k));
    }
    return traj;
}

std::vector<ObjectId>
detectOccluders(const GaussianScene &scene, ObjectId target, const std::vector<Camera> &views, int threads) {
    std::set<ObjectId> found;
    for (const auto &cam: views) {
        const auto out   = render(scene, cam, {.channels = kIds | kDepth | kAlpha, .threads = threads});
        const ImageF depth = out.normalizedDepth();
        Mask footprint(cam.width, cam.height, 1);
        std::vector<double> targetDepth;
        for (std::size_t p = 0; p < footprint.pixelCount(); ++p) {
            if (out.ids.data()[p] == target) {
                footprint.data()[p] = 1;
                targetDepth.push_back(depth.data()[p]);
            }
        }
        if (targetDepth.empty()) {
            continue;
        }
        const Mask zone = dilate(footprint, kOccluderMargin);
        std::map<ObjectId, std::vector<double>> overlap;
        for (std::size_t p = 0; p < zone.pixelCount(); ++p) {
            const ObjectId id = out.ids.data()[p];
            if (zone.data()[p] && id != 0 && id != target) {
                overlap[id].push_back(depth.data()[p]);
            }
        }
        auto median = [](std::vector<double> v) {
            const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
            std::nth_element(v.begin(), mid, v.end());
            return *mid;
        };
        const double td = median(targetDepth);
        for (auto &[id, d]: overlap) {
            if (median(d) < td) {
                found.insert(id);
            }
        }
    }
    return {found.begin(), found.end()};
}

} // namespace splatedit
