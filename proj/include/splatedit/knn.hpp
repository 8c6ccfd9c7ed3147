// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <splatedit/math.hpp>

#include <cstdint>
#include <vector>

namespace splatedit {

/// Static 3-d tree over a point set for k-nearest-neighbour queries.
class KdTree {
  public:
    explicit KdTree(std::vector<Vec3> points);

    /// Indices of the k nearest points to `q`, nearest first (ties by index). `exclude` drops one
    /// index from the result (pass UINT32_MAX for none).
    std::vector<std::uint32_t> nearest(const Vec3 &q, std::size_t k, std::uint32_t exclude = UINT32_MAX) const;

    std::size_t
    size() const noexcept {
        return mPoints.size();
    }

  private:
    struct Node {
        std::uint32_t begin, end; // range in mOrder
        int axis;                 // -1 for a leaf
        double split;
        std::int32_t left, right;
    };
    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    std::vector<Vec3> mPoints;
    std::vector<std::uint32_t> mOrder;
    std::vector<Node> mNodes;
};

/// For every point, its k nearest other points (all others when fewer exist).
std::vector<std::vector<std::uint32_t>> knnGraph(const std::vector<Vec3> &points, std::size_t k, int threads = 1);

} // namespace splatedit
