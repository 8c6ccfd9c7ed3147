// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/hull.hpp>

#include <algorithm>
#include <map>
#include <set>

namespace splatedit {

namespace {

ConvexHull::Face
makeFace(const std::vector<Vec3> &pts, int a, int b, int c) {
    const Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]).normalized();
    return {{a, b, c}, n, n.dot(pts[a])};
}

} // namespace

std::optional<ConvexHull>
ConvexHull::build(const std::vector<Vec3> &pts) {
    const int n = static_cast<int>(pts.size());
    if (n < 4) {
        return std::nullopt;
    }
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto &p: pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double scale = (hi - lo).norm();
    if (!(scale > 0.0)) {
        return std::nullopt;
    }
    const double eps = 1e-10 * scale;

    // Initial tetrahedron from extreme points.
    int i0 = 0;
    for (int i = 1; i < n; ++i) {
        if (pts[i].x() < pts[i0].x()) {
            i0 = i;
        }
    }
    int i1 = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = (pts[i] - pts[i0]).squaredNorm();
        if (d > best) {
            best = d;
            i1   = i;
        }
    }
    const Vec3 axis = (pts[i1] - pts[i0]).normalized();
    int i2 = -1;
    best   = -1.0;
    for (int i = 0; i < n; ++i) {
        const Vec3 r   = pts[i] - pts[i0];
        const double d = (r - axis * axis.dot(r)).norm();
        if (d > best) {
            best = d;
            i2   = i;
        }
    }
    if (best <= eps) {
        return std::nullopt;
    }
    const Vec3 pn = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
    int i3        = -1;
    best          = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(pn.dot(pts[i] - pts[i0]));
        if (d > best) {
            best = d;
            i3   = i;
        }
    }
    if (best <= eps * 10.0) {
        return std::nullopt;
    }

    ConvexHull hull;
    hull.mTolerance = 1e-9 * scale;
    auto &faces     = hull.mFaces;
    const std::array<std::array<int, 3>, 4> tet{{{i0, i1, i2}, {i0, i3, i1}, {i1, i3, i2}, {i2, i3, i0}}};
    const Vec3 inner = (pts[i0] + pts[i1] + pts[i2] + pts[i3]) / 4.0;
    for (auto f: tet) {
        Face face = makeFace(pts, f[0], f[1], f[2]);
        if (face.normal.dot(inner) > face.offset) {
            std::swap(f[1], f[2]);
            face = makeFace(pts, f[0], f[1], f[2]);
        }
        faces.push_back(face);
    }

    for (int p = 0; p < n; ++p) {
        if (p == i0 || p == i1 || p == i2 || p == i3) {
            continue;
        }
        std::vector<char> visible(faces.size(), 0);
        bool any = false;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (faces[f].normal.dot(pts[p]) - faces[f].offset > eps) {
                visible[f] = 1;
                any        = true;
            }
        }
        if (!any) {
            continue;
        }
        std::set<std::pair<int, int>> visibleEdges;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (visible[f]) {
                const auto &v = faces[f].v;
                for (int e = 0; e < 3; ++e) {
                    visibleEdges.emplace(v[e], v[(e + 1) % 3]);
                }
            }
        }
        std::vector<Face> next;
        next.reserve(faces.size() + 8);
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (!visible[f]) {
                next.push_back(faces[f]);
            }
        }
        // Horizon: directed edges of visible faces whose twin belongs to a hidden face.
        for (const auto &[a, b]: visibleEdges) {
            if (!visibleEdges.count({b, a})) {
                next.push_back(makeFace(pts, a, b, p));
            }
        }
        faces = std::move(next);
    }
    return hull;
}

bool
ConvexHull::contains(const Vec3 &p) const {
    for (const auto &f: mFaces) {
        if (f.normal.dot(p) - f.offset > mTolerance) {
            return false;
        }
    }
    return !mFaces.empty();
}

std::vector<int>
ConvexHull::vertices() const {
    std::set<int> v;
    for (const auto &f: mFaces) {
        v.insert(f.v.begin(), f.v.end());
    }
    return {v.begin(), v.end()};
}

} // namespace splatedit
