// Copyright Contributors to the splatedit project
// SPDX-License-Identifier: Apache-2.0

#include <splatedit/morphology.hpp>

#include <utility>
#include <vector>

namespace splatedit {

namespace {

std::vector<std::pair<int, int>>
disc(int radius) {
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) {
                offsets.emplace_back(dx, dy);
            }
        }
    }
    return offsets;
}

} // namespace

Mask
dilate(const Mask &mask, int radius) {
    if (radius <= 0) {
        return mask;
    }
    const auto offsets = disc(radius);
    Mask out(mask.width(), mask.height(), 1);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) {
                continue;
            }
            for (const auto &[dx, dy]: offsets) {
                if (mask.contains(x + dx, y + dy)) {
                    out.at(x + dx, y + dy) = 1;
                }
            }
        }
    }
    return out;
}

Mask
erode(const Mask &mask, int radius) {
    if (radius <= 0) {
        return mask;
    }
    const auto offsets = disc(radius);
    Mask out(mask.width(), mask.height(), 1);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            bool keep = mask.at(x, y) != 0;
            for (auto it = offsets.begin(); keep && it != offsets.end(); ++it) {
                const int qx = x + it->first, qy = y + it->second;
                keep = !mask.contains(qx, qy) || mask.at(qx, qy);
            }
            out.at(x, y) = keep ? 1 : 0;
        }
    }
    return out;
}

Mask
close(const Mask &mask, int radius) {
    return erode(dilate(mask, radius), radius);
}

} // namespace splatedit
