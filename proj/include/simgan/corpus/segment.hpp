#pragma once

#include <cstdint>
#include <vector>

#include "simgan/corpus/color.hpp"
#include "simgan/corpus/types.hpp"

namespace simgan::corpus {

struct SegmentConfig {
    double sat_threshold = 0.08;
    int min_region_px = 256;
};

/// Foreground = HSV saturation above threshold; 4-connected regions smaller
/// than `min_region_px` are dropped.
inline TissueMask segment_tissue(const SlideImage& image, double sat_threshold = 0.08, int min_region_px = 256)
{
    if (image.pixels.empty()) {
        throw InvalidInput("segment_tissue: degenerate image with zero area");
    }
    if (!(sat_threshold > 0.0 && sat_threshold < 1.0)) {
        throw InvalidInput("segment_tissue: sat_threshold must lie in (0,1)");
    }
    const Image& px = image.pixels;
    const int h = px.height();
    const int w = px.width();
    TissueMask mask(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            mask.at(y, x) = saturation(px.at(0, y, x), px.at(1, y, x), px.at(2, y, x)) > sat_threshold ? 1 : 0;
        }
    }
    if (min_region_px <= 1) {
        return mask;
    }

    std::vector<std::int32_t> label(static_cast<std::size_t>(h) * w, -1);
    std::vector<int> stack;
    std::vector<int> region;
    for (int start = 0; start < h * w; ++start) {
        if (mask.bits()[start] == 0 || label[start] >= 0) {
            continue;
        }
        region.clear();
        stack.push_back(start);
        label[start] = start;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            region.push_back(p);
            const int y = p / w;
            const int x = p % w;
            const int nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (const auto& nb : nbrs) {
                if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) {
                    continue;
                }
                const int q = nb[0] * w + nb[1];
                if (mask.bits()[q] != 0 && label[q] < 0) {
                    label[q] = start;
                    stack.push_back(q);
                }
            }
        }
        if (static_cast<int>(region.size()) < min_region_px) {
            for (int p : region) {
                mask.bits()[p] = 0;
            }
        }
    }
    return mask;
}

inline TissueMask segment_tissue(const SlideImage& image, const SegmentConfig& cfg)
{
    return segment_tissue(image, cfg.sat_threshold, cfg.min_region_px);
}

} // namespace simgan::corpus
