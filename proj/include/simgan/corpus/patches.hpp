#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "simgan/core/random.hpp"
#include "simgan/corpus/types.hpp"

namespace simgan::corpus {

struct PatchConfig {
    int size = 64;
    int stride = 64;
    double min_tissue = 0.5;
};

/// Windows of `size` at multiples of `stride`, kept when their mask coverage
/// is at least `min_tissue`. Row-major order.
inline std::vector<Patch> extract_patches(const SlideImage& image, const TissueMask& mask, int size, int stride,
                                          double min_tissue)
{
    validate(image, size);
    if (stride < 1) {
        throw InvalidInput("extract_patches: stride must be >= 1");
    }
    if (!(min_tissue >= 0.0 && min_tissue <= 1.0)) {
        throw InvalidInput("extract_patches: min_tissue must lie in [0,1]");
    }
    const int h = image.pixels.height();
    const int w = image.pixels.width();
    if (mask.height() != h || mask.width() != w) {
        throw InvalidInput("extract_patches: mask and image sizes differ");
    }

    // summed-area table of the mask
    std::vector<std::int64_t> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
    for (int y = 0; y < h; ++y) {
        std::int64_t row = 0;
        for (int x = 0; x < w; ++x) {
            row += mask.at(y, x) != 0;
            sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    auto window_sum = [&](int y, int x) {
        auto at = [&](int yy, int xx) { return sat[static_cast<std::size_t>(yy) * (w + 1) + xx]; };
        return at(y + size, x + size) - at(y, x + size) - at(y + size, x) + at(y, x);
    };

    std::vector<Patch> out;
    const double area = static_cast<double>(size) * size;
    for (int y = 0, row = 0; y + size <= h; y += stride, ++row) {
        for (int x = 0, col = 0; x + size <= w; x += stride, ++col) {
            const double coverage = static_cast<double>(window_sum(y, x)) / area;
            if (coverage < min_tissue) {
                continue;
            }
            Patch p;
            p.pixels = image.pixels.crop(y, x, size, size);
            p.source_slide = image.slide_id;
            p.grid_pos = {row, col};
            p.origin_y = y;
            p.origin_x = x;
            p.class_label = image.class_label;
            out.push_back(std::move(p));
        }
    }
    return out;
}

inline std::vector<Patch> extract_patches(const SlideImage& image, const TissueMask& mask, const PatchConfig& cfg)
{
    return extract_patches(image, mask, cfg.size, cfg.stride, cfg.min_tissue);
}

/// Uniform random subset of at most `count` patches, original order preserved.
inline std::vector<Patch> subsample(const std::vector<Patch>& patches, std::size_t count, std::uint64_t seed)
{
    if (count >= patches.size()) {
        return patches;
    }
    std::vector<std::size_t> idx(patches.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed, "subsample");
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    std::vector<Patch> out;
    out.reserve(count);
    for (auto i : idx) {
        out.push_back(patches[i]);
    }
    return out;
}

/// Wraps whole slides, resized to `size`x`size`, as single-window patches.
inline std::vector<Patch> slides_as_patches(const std::vector<SlideImage>& slides, int size)
{
    std::vector<Patch> out;
    for (const auto& s : slides) {
        Patch p;
        p.pixels = resize_bilinear(s.pixels, size, size);
        p.source_slide = s.slide_id;
        p.class_label = s.class_label;
        out.push_back(std::move(p));
    }
    return out;
}

/// Downsamples every patch by an integer factor (used for reduced-resolution GAN profiles).
inline std::vector<Patch> rescale_patches(const std::vector<Patch>& patches, int factor)
{
    std::vector<Patch> out = patches;
    for (auto& p : out) {
        p.pixels = downsample_box(p.pixels, factor);
    }
    return out;
}

} // namespace simgan::corpus
