// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Lifting 2-D masks to Gaussian index sets and matching them across views.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/image.hpp>
#include <splatedit/scene.hpp>

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace splatedit {

/// Sorted, unique splat indices.
using IndexSet = std::vector<std::uint32_t>;

inline constexpr double kDefaultIouThreshold = 0.2;
inline constexpr int kMinMaskArea            = 16;
inline constexpr double kDefaultContainment  = 0.5;

struct LiftOptions {
    /// A two-cluster split is accepted only when the centroid gap reaches this fraction of the
    /// depth extent of all splats in front of the camera.
    double minGapFraction = 0.01;
    /// When set (0, 1], keep the nearest fraction of candidates instead of clustering.
    double keepRatio = 0.0;
};

/// Optimal two-cluster partition of 1-D values (exact, by scanning split points of the sorted
/// data). Returns the number of values in the lower cluster and both centroids.
struct DepthSplit {
    std::size_t lowerCount = 0;
    double lowerMean = 0.0;
    double upperMean = 0.0;
};
DepthSplit kmeans2(std::vector<double> sortedValues);

IndexSet liftMask(const GaussianScene &scene, const Camera &camera, const Mask &mask,
                  const LiftOptions &options = {});

double gsIou(const IndexSet &a, const IndexSet &b);

class KeyObjectDatabase {
  public:
    /// Entries with ids 1..size().
    std::size_t
    size() const noexcept {
        return mSets.size();
    }
    const IndexSet &members(ObjectId id) const;
    /// Best entry by GS-IoU, ties to the smaller id; id 0 when the database is empty.
    std::pair<ObjectId, double> bestMatch(const IndexSet &set) const;
    /// New entry; returns its id, or 0 when the id space is exhausted.
    ObjectId add(const IndexSet &set);
    void merge(ObjectId id, const IndexSet &set);
    /// Folds every entry that has at least `containment` of its splats inside a larger entry
    /// into that entry, then renumbers densely from 1. Returns old id -> new id (index 0 unused).
    std::vector<ObjectId> consolidate(double containment);
    /// Makes the sets disjoint: a splat claimed by several entries stays with the one that
    /// lifted it most often (ties to the smaller id).
    void finalize();

    nlohmann::json toJson() const;
    static KeyObjectDatabase fromJson(const nlohmann::json &j);

  private:
    std::vector<IndexSet> mSets;
    std::vector<std::map<std::uint32_t, std::uint32_t>> mVotes;
};

struct SegmentationFrame {
    std::size_t camera = 0; // index into the camera list
    std::vector<Mask> masks;
};

/// One frame per segment label of a raw label map (0 is not a segment).
SegmentationFrame frameFromLabelMap(std::size_t camera, const LabelMap &labels);

struct AssociationResult {
    KeyObjectDatabase database;
    std::vector<LabelMap> labels; // one per frame
    std::vector<std::string> warnings;
};

/// Sequential GS-IoU matching over the frames, followed by consolidation of fragment entries
/// (containment <= 0 disables it) and the disjoint finalize step.
AssociationResult associate(const GaussianScene &scene, const std::vector<Camera> &cameras,
                            const std::vector<SegmentationFrame> &frames,
                            double threshold = kDefaultIouThreshold, const LiftOptions &options = {},
                            double containment = kDefaultContainment);

/// Reads frames from a directory. With a manifest.json of the form
/// {"frames": [{"camera": <index or name>, "labels": "a.png"} | {"camera": ..., "masks": [...]}]}
/// entries are taken in order; otherwise every *.png is a label map for the camera at the same
/// position in name order.
std::vector<SegmentationFrame> loadFrames(const std::filesystem::path &dir,
                                          const std::vector<Camera> &cameras);

} // namespace splatedit
