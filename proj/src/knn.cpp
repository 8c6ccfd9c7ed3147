// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/knn.hpp>
#include <splatedit/parallel.hpp>

#include <algorithm>
#include <numeric>
#include <queue>

namespace splatedit {

namespace {
constexpr std::uint32_t kLeafSize = 12;
}

KdTree::KdTree(std::vector<Vec3> points) : mPoints(std::move(points)), mOrder(mPoints.size()) {
    std::iota(mOrder.begin(), mOrder.end(), 0u);
    if (!mPoints.empty()) {
        build(0, static_cast<std::uint32_t>(mPoints.size()));
    }
}

std::int32_t
KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(mNodes.size());
    mNodes.push_back({begin, end, -1, 0.0, -1, -1});
    if (end - begin <= kLeafSize) {
        return id;
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (auto i = begin; i < end; ++i) {
        lo = lo.cwiseMin(mPoints[mOrder[i]]);
        hi = hi.cwiseMax(mPoints[mOrder[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(mOrder.begin() + begin, mOrder.begin() + mid, mOrder.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return mPoints[a][axis] < mPoints[b][axis]; });
    const double split = mPoints[mOrder[mid]][axis];
    const auto left    = build(begin, mid);
    const auto right   = build(mid, end);
    mNodes[id].axis    = axis;
    mNodes[id].split   = split;
    mNodes[id].left    = left;
    mNodes[id].right   = right;
    return id;
}

std::vector<std::uint32_t>
KdTree::nearest(const Vec3 &q, std::size_t k, std::uint32_t exclude) const {
    using Item = std::pair<double, std::uint32_t>; // max-heap on (distance, index)
    std::priority_queue<Item> heap;
    if (k == 0 || mNodes.empty()) {
        return {};
    }
    auto visit = [&](auto &&self, std::int32_t n) -> void {
        const Node &node = mNodes[n];
        if (node.axis < 0) {
            for (auto i = node.begin; i < node.end; ++i) {
                const std::uint32_t p = mOrder[i];
                if (p == exclude) {
                    continue;
                }
                const Item item{(mPoints[p] - q).squaredNorm(), p};
                if (heap.size() < k) {
                    heap.push(item);
                } else if (item < heap.top()) {
                    heap.pop();
                    heap.push(item);
                }
            }
            return;
        }
        const double delta = q[node.axis] - node.split;
        const auto first   = delta < 0 ? node.left : node.right;
        const auto second  = delta < 0 ? node.right : node.left;
        self(self, first);
        if (heap.size() < k || delta * delta <= heap.top().first) {
            self(self, second);
        }
    };
    visit(visit, 0);
    std::vector<std::uint32_t> out(heap.size());
    for (auto i = out.size(); i-- > 0;) {
        out[i] = heap.top().second;
        heap.pop();
    }
    return out;
}

std::vector<std::vector<std::uint32_t>>
knnGraph(const std::vector<Vec3> &points, std::size_t k, int threads) {
    const KdTree tree(points);
    std::vector<std::vector<std::uint32_t>> graph(points.size());
    parallelFor(points.size(), threads, [&](std::size_t i) {
        graph[i] = tree.nearest(points[i], k, static_cast<std::uint32_t>(i));
    });
    return graph;
}

} // namespace splatedit
