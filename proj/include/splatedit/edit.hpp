// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

// Object picking, removal with hull expansion and undo, virtual orbits around a removed object,
// never-before-seen region masks and occluder detection.

#pragma once

#include <splatedit/camera.hpp>
#include <splatedit/image.hpp>
#include <splatedit/scene.hpp>

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace splatedit {

/// Object id under a pixel of the rendered id map; nullopt on background.
std::optional<ObjectId> pickObject(const GaussianScene &scene, const Camera &camera, int x, int y);

struct RemovalRecord {
    std::vector<ObjectId> ids;
    std::vector<std::uint32_t> indices; // original positions, ascending
    std::vector<Gaussian> removed;      // same order as indices
    std::size_t hullCaptured = 0;       // splats removed only because they sat inside the hull
    std::size_t originalSize = 0;
};

struct Removal {
    GaussianScene scene;
    RemovalRecord record;
};

/// Removes splats whose id is in `ids`; with `hull`, also every other splat inside the convex
/// hull of the removed centres. Throws UnknownObject for ids with no members.
Removal removeObjects(const GaussianScene &scene, const std::vector<ObjectId> &ids, bool hull);

/// Reinserts removed splats at their original positions.
GaussianScene restoreRemoval(const GaussianScene &edited, const RemovalRecord &record);

nlohmann::json removalToJson(const RemovalRecord &record);
RemovalRecord removalFromJson(const nlohmann::json &j);

/// Mean position of the object's splats. Throws UnknownObject when it has none.
Vec3 objectCenter(const GaussianScene &scene, ObjectId id);

struct NbsOptions {
    double alphaThreshold = 0.95;
    int closeRadius       = 2;
    int dilateRadius      = 1;
};

/// Pixels where `before` showed a removed object, `after` shows something else and is not opaque;
/// closed then dilated.
Mask nbsMask(const GaussianScene &before, const GaussianScene &after, const Camera &camera,
             const std::vector<ObjectId> &removedIds, const NbsOptions &options = {});

struct TrajectoryOptions {
    int views              = 30;
    double keepFraction    = 0.9;
    double minArea         = 0.01;
    double maxArea         = 0.5;
    int maxBisectionSteps  = 12;
    double minRadiusFactor = 0.25;
    double maxRadiusFactor = 2.0;
    NbsOptions nbs;
    int threads = 1;
};

struct Trajectory {
    std::vector<Camera> cameras;
    Vec3 objectCenter;
    Vec3 circleCenter;
    Vec3 normal;
    double radius       = 0.0;
    double maskFraction = 0.0; // first-view NBS area / image area
    std::vector<std::string> warnings;
};

/// Circular orbit of `options.views` cameras around the removed object. The orbit plane is fit
/// by PCA to the nearest training camera centres; the radius is chosen by bisection so the first
/// view's NBS mask covers [minArea, maxArea] of the image.
Trajectory virtualTrajectory(const GaussianScene &before, const GaussianScene &after,
                             const std::vector<Camera> &training, const std::vector<ObjectId> &ids,
                             const TrajectoryOptions &options = {});

inline constexpr int kOccluderMargin = 5;

/// Objects that overlap the target's dilated footprint in some view and sit in front of it there.
std::vector<ObjectId> detectOccluders(const GaussianScene &scene, ObjectId target,
                                      const std::vector<Camera> &views, int threads = 1);

} // namespace splatedit
