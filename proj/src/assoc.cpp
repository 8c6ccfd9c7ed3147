// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/assoc.hpp>
#include <splatedit/error.hpp>
#include <splatedit/image_io.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace splatedit {

DepthSplit
kmeans2(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    DepthSplit best;
    if (n == 0) {
        return best;
    }
    best.lowerCount = n;
    best.lowerMean  = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    best.upperMean  = best.lowerMean;
    if (n < 2) {
        return best;
    }
    // prefix sums; SSE(a..b) = sum x^2 - (sum x)^2 / count
    std::vector<double> s(n + 1, 0.0), s2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s[i + 1]  = s[i] + v[i];
        s2[i + 1] = s2[i] + v[i] * v[i];
    }
    double bestCost = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < n; ++k) {
        if (v[k] == v[k - 1]) {
            continue;
        }
        const double lo = s[k], hi = s[n] - s[k];
        const double cost = (s2[k] - lo * lo / k) + (s2[n] - s2[k] - hi * hi / (n - k));
        if (cost < bestCost) {
            bestCost        = cost;
            best.lowerCount = k;
            best.lowerMean  = lo / k;
            best.upperMean  = hi / (n - k);
        }
    }
    return best;
}

IndexSet
liftMask(const GaussianScene &scene, const Camera &camera, const Mask &mask, const LiftOptions &options) {
    if (mask.width() != camera.width || mask.height() != camera.height) {
        throw InvalidArgument("mask size " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                              " does not match camera '" + camera.name + "'");
    }
    std::vector<std::pair<double, std::uint32_t>> candidates;
    double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
    for (std::uint32_t i = 0; i < scene.size(); ++i) {
        const Vec3 pc = camera.toCamera(scene.gaussians[i].position);
        if (!(pc.z() > 0.0)) {
            continue;
        }
        zmin         = std::min(zmin, pc.z());
        zmax         = std::max(zmax, pc.z());
        const Vec2 p = camera.projectCameraPoint(pc);
        const long x = std::lround(p.x()), y = std::lround(p.y());
        if (x >= 0 && y >= 0 && x < mask.width() && y < mask.height() && mask.at(x, y)) {
            candidates.emplace_back(pc.z(), i);
        }
    }
    if (candidates.empty()) {
        return {};
    }
    std::sort(candidates.begin(), candidates.end());

    std::size_t keep = candidates.size();
    if (options.keepRatio > 0.0) {
        keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(options.keepRatio * candidates.size())));
        keep = std::min(keep, candidates.size());
    } else {
        std::vector<double> z(candidates.size());
        std::transform(candidates.begin(), candidates.end(), z.begin(), [](const auto &c) { return c.first; });
        const DepthSplit split = kmeans2(std::move(z));
        if (split.upperMean - split.lowerMean >= options.minGapFraction * (zmax - zmin)) {
            keep = split.lowerCount;
        }
    }
    IndexSet out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        out.push_back(candidates[i].second);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double
gsIou(const IndexSet &a, const IndexSet &b) {
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    std::size_t inter = 0;
    auto ia = a.begin(), ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

const IndexSet &
KeyObjectDatabase::members(ObjectId id) const {
    if (id == 0 || id > mSets.size()) {
        throw UnknownObject("unknown object id " + std::to_string(id));
    }
    return mSets[id - 1];
}

std::pair<ObjectId, double>
KeyObjectDatabase::bestMatch(const IndexSet &set) const {
    ObjectId best   = 0;
    double bestIou  = -1.0;
    for (std::size_t i = 0; i < mSets.size(); ++i) {
        const double iou = gsIou(set, mSets[i]);
        if (iou > bestIou) {
            bestIou = iou;
            best    = static_cast<ObjectId>(i + 1);
        }
    }
    return {best, std::max(bestIou, 0.0)};
}

ObjectId
KeyObjectDatabase::add(const IndexSet &set) {
    if (mSets.size() >= static_cast<std::size_t>(kMaxObjectId)) {
        return 0;
    }
    mSets.push_back(set);
    auto &votes = mVotes.emplace_back();
    for (auto i: set) {
        votes[i] = 1;
    }
    return static_cast<ObjectId>(mSets.size());
}

void
KeyObjectDatabase::merge(ObjectId id, const IndexSet &set) {
    (void)members(id);
    IndexSet merged;
    merged.reserve(mSets[id - 1].size() + set.size());
    std::set_union(mSets[id - 1].begin(), mSets[id - 1].end(), set.begin(), set.end(), std::back_inserter(merged));
    mSets[id - 1] = std::move(merged);
    for (auto i: set) {
        ++mVotes[id - 1][i];
    }
}

std::vector<ObjectId>
KeyObjectDatabase::consolidate(double containment) {
    const std::size_t n = mSets.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<bool> alive(n, true);
    for (bool changed = true; changed && containment > 0.0;) {
        changed = false;
        std::vector<std::size_t> bySize;
        for (std::size_t e = 0; e < n; ++e) {
            if (alive[e]) {
                bySize.push_back(e);
            }
        }
        std::stable_sort(bySize.begin(), bySize.end(),
                         [&](std::size_t a, std::size_t b) { return mSets[a].size() < mSets[b].size(); });
        for (std::size_t ai = 0; ai < bySize.size() && !changed; ++ai) {
            const std::size_t a = bySize[ai];
            std::size_t target  = n;
            double bestShare    = 0.0;
            for (std::size_t bi = ai + 1; bi < bySize.size(); ++bi) {
                const std::size_t b = bySize[bi];
                IndexSet common;
                std::set_intersection(mSets[a].begin(), mSets[a].end(), mSets[b].begin(), mSets[b].end(),
                                      std::back_inserter(common));
                const double share = static_cast<double>(common.size()) / static_cast<double>(mSets[a].size());
                if (share >= containment && share > bestShare) {
                    bestShare = share;
                    target    = b;
                }
            }
            if (target == n) {
                continue;
            }
            IndexSet merged;
            std::set_union(mSets[a].begin(), mSets[a].end(), mSets[target].begin(), mSets[target].end(),
                           std::back_inserter(merged));
            mSets[target] = std::move(merged);
            for (const auto &[i, v]: mVotes[a]) {
                mVotes[target][i] += v;
            }
            alive[a]  = false;
            parent[a] = target;
            changed   = true;
        }
    }
    std::vector<ObjectId> remap(n + 1, 0);
    std::vector<IndexSet> sets;
    std::vector<std::map<std::uint32_t, std::uint32_t>> votes;
    std::vector<ObjectId> newId(n, 0);
    for (std::size_t e = 0; e < n; ++e) {
        if (alive[e]) {
            sets.push_back(std::move(mSets[e]));
            votes.push_back(std::move(mVotes[e]));
            newId[e] = static_cast<ObjectId>(sets.size());
        }
    }
    for (std::size_t e = 0; e < n; ++e) {
        std::size_t root = e;
        while (!alive[root]) {
            root = parent[root];
        }
        remap[e + 1] = newId[root];
    }
    mSets  = std::move(sets);
    mVotes = std::move(votes);
    return remap;
}

void
KeyObjectDatabase::finalize() {
    std::map<std::uint32_t, std::pair<std::uint32_t, std::size_t>> owner; // splat -> (votes, entry)
    for (std::size_t e = 0; e < mSets.size(); ++e) {
        for (auto i: mSets[e]) {
            const std::uint32_t v = mVotes[e].count(i) ? mVotes[e].at(i) : 0;
            auto [it, inserted]   = owner.try_emplace(i, v, e);
            if (!inserted && v > it->second.first) {
                it->second = {v, e};
            }
        }
    }
    for (std::size_t e = 0; e < mSets.size(); ++e) {
        std::erase_if(mSets[e], [&](std::uint32_t i) { return owner.at(i).second != e; });
    }
}

nlohmann::json
KeyObjectDatabase::toJson() const {
    nlohmann::json objects = nlohmann::json::object();
    for (std::size_t e = 0; e < mSets.size(); ++e) {
        objects[std::to_string(e + 1)] = mSets[e];
    }
    return {{"objects", objects}, {"next_id", mSets.size() + 1}};
}

KeyObjectDatabase
KeyObjectDatabase::fromJson(const nlohmann::json &j) {
    KeyObjectDatabase db;
    try {
        const auto &objects = j.at("objects");
        for (std::size_t id = 1; id <= objects.size(); ++id) {
            auto set = objects.at(std::to_string(id)).get<IndexSet>();
            std::sort(set.begin(), set.end());
            set.erase(std::unique(set.begin(), set.end()), set.end());
            db.add(set);
        }
    } catch (const nlohmann::json::exception &e) {
        throw LoadError(std::string("database: ") + e.what());
    }
    return db;
}

SegmentationFrame
frameFromLabelMap(std::size_t camera, const LabelMap &labels) {
    SegmentationFrame frame;
    frame.camera = camera;
    std::map<std::uint16_t, std::size_t> slot;
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const auto l = labels.at(x, y);
            if (l == 0) {
                continue;
            }
            auto [it, inserted] = slot.try_emplace(l, frame.masks.size());
            if (inserted) {
                frame.masks.emplace_back(labels.width(), labels.height(), 1);
            }
            frame.masks[it->second].at(x, y) = 1;
        }
    }
    return frame;
}

AssociationResult
associate(const GaussianScene &scene, const std::vector<Camera> &cameras,
          const std::vector<SegmentationFrame> &frames, double threshold, const LiftOptions &options,
          double containment) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw InvalidArgument("GS-IoU threshold must lie in [0,1]");
    }
    AssociationResult result;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const auto &frame = frames[f];
        if (frame.camera >= cameras.size()) {
            throw InvalidArgument("frame " + std::to_string(f) + " refers to camera " + std::to_string(frame.camera) +
                                  " of " + std::to_string(cameras.size()));
        }
        const Camera &cam = cameras[frame.camera];
        std::vector<ObjectId> ids(frame.masks.size(), 0);
        std::vector<std::size_t> areas(frame.masks.size());
        for (std::size_t m = 0; m < frame.masks.size(); ++m) {
            const Mask &mask = frame.masks[m];
            if (mask.width() != cam.width || mask.height() != cam.height) {
                throw InvalidArgument("frame " + std::to_string(f) + " mask " + std::to_string(m) +
                                      " does not match camera '" + cam.name + "' size");
            }
            areas[m] = maskArea(mask);
            if (areas[m] < static_cast<std::size_t>(kMinMaskArea)) {
                continue;
            }
            const IndexSet lifted = liftMask(scene, cam, mask, options);
            if (lifted.empty()) {
                continue;
            }
            auto [best, iou] = result.database.bestMatch(lifted);
            if (best != 0 && iou >= threshold) {
                result.database.merge(best, lifted);
                ids[m] = best;
            } else {
                ids[m] = result.database.add(lifted);
                if (ids[m] == 0) {
                    result.warnings.push_back("frame " + std::to_string(f) + " mask " + std::to_string(m) +
                                              ": object limit of " + std::to_string(kMaxObjectId) +
                                              " reached, labelled 0");
                }
            }
        }

        std::vector<std::size_t> order(frame.masks.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });
        LabelMap labels(cam.width, cam.height, 1);
        for (const std::size_t m: order) {
            if (ids[m] == 0) {
                continue;
            }
            const Mask &mask = frame.masks[m];
            for (std::size_t p = 0; p < mask.pixelCount(); ++p) {
                if (mask.data()[p]) {
                    labels.data()[p] = ids[m];
                }
            }
        }
        result.labels.push_back(std::move(labels));
    }
    const auto remap = result.database.consolidate(containment);
    for (auto &labels: result.labels) {
        for (auto &l: labels.data()) {
            l = remap[l];
        }
    }
    result.database.finalize();
    return result;
}

namespace {

std::size_t
resolveCamera(const nlohmann::json &ref, const std::vector<Camera> &cameras) {
    if (ref.is_number_unsigned() || ref.is_number_integer()) {
        const auto i = ref.get<long long>();
        if (i < 0 || static_cast<std::size_t>(i) >= cameras.size()) {
            throw LoadError("manifest camera index " + std::to_string(i) + " out of range");
        }
        return static_cast<std::size_t>(i);
    }
    const auto name = ref.get<std::string>();
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        if (cameras[i].name == name) {
            return i;
        }
    }
    throw LoadError("manifest names unknown camera '" + name + "'");
}

} // namespace

std::vector<SegmentationFrame>
loadFrames(const std::filesystem::path &dir, const std::vector<Camera> &cameras) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw IoError("mask directory '" + dir.string() + "' does not exist");
    }
    std::vector<SegmentationFrame> frames;
    const fs::path manifest = dir / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
            for (const auto &entry: j.at("frames")) {
                const std::size_t cam = resolveCamera(entry.at("camera"), cameras);
                if (entry.contains("labels")) {
                    frames.push_back(frameFromLabelMap(cam, readLabelPng(dir / entry.at("labels").get<std::string>())));
                } else {
                    SegmentationFrame frame;
                    frame.camera = cam;
                    for (const auto &m: entry.at("masks")) {
                        frame.masks.push_back(readMaskPng(dir / m.get<std::string>()));
                    }
                    frames.push_back(std::move(frame));
                }
            }
        } catch (const nlohmann::json::exception &e) {
            throw LoadError("mask manifest: " + std::string(e.what()));
        }
        return frames;
    }
    std::vector<fs::path> files;
    for (const auto &e: fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.size() > cameras.size()) {
        throw LoadError("mask directory holds " + std::to_string(files.size()) + " label maps for " +
                        std::to_string(cameras.size()) + " cameras");
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
        frames.push_back(frameFromLabelMap(i, readLabelPng(files[i])));
    }
    return frames;
}

} // namespace splatedit
