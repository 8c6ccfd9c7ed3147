// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/math.hpp>

#include <array>
#include <optional>
#include <vector>

namespace splatedit {

/// 3-D convex hull as outward-facing triangles.
class ConvexHull {
  public:
    struct Face {
        std::array<int, 3> v; // counter-clockwise seen from outside
        Vec3 normal;          // unit, outward
        double offset;        // normal . x = offset on the plane
    };

    /// Incremental construction. Returns nullopt for fewer than four points or when all points are
    /// (numerically) coplanar.
    static std::optional<ConvexHull> build(const std::vector<Vec3> &points);

    /// True when `p` lies inside or on the hull, within a tolerance relative to the hull size.
    bool contains(const Vec3 &p) const;

    const std::vector<Face> &
    faces() const noexcept {
        return mFaces;
    }
    /// Indices of input points that are hull vertices, ascending.
    std::vector<int> vertices() const;

  private:
    std::vector<Face> mFaces;
    double mTolerance = 0.0;
};

} // namespace splatedit
