#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "simgan/core/random.hpp"
#include "simgan/corpus/color.hpp"
#include "simgan/corpus/types.hpp"

namespace simgan::corpus {

struct SynthConfig {
    int height = 384;
    int width = 384;
    double hue_separation = 40.0; ///< stroma hue step between consecutive classes, degrees
    double margin_fraction = 0.08; ///< white border kept free of tissue on every side
};

inline std::string class_name(int k, int classes)
{
    if (classes == 2) {
        return k == 0 ? "benign" : "invasive";
    }
    return "class" + std::to_string(k);
}

namespace detail {

struct Ellipse {
    double cy, cx, ry, rx, phase, wobble;
    [[nodiscard]] bool contains(double y, double x) const
    {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        const double angle = std::atan2(dy, dx);
        const double r = 1.0 + wobble * std::sin(3.0 * angle + phase);
        return dy * dy + dx * dx <= r * r;
    }
};

} // namespace detail

/// Procedural H&E-like slides: near-white background, a tissue region made of
/// a few wobbly ellipses kept inside a white margin, stroma whose hue depends on
/// the class, and dark nuclei whose density and size grow with the class index.
/// Each slide also carries small slide-specific hue, saturation and nucleus-size
/// offsets. Pixels are quantised to 8 bits.
inline std::vector<SlideImage> synth_corpus(int n_slides, int classes, std::uint64_t seed,
                                            const SynthConfig& cfg = {})
{
    if (n_slides < 2 || classes < 2) {
        throw InvalidInput("synth_corpus: need n_slides >= 2 and classes >= 2");
    }
    if (cfg.height < 32 || cfg.width < 32) {
        throw InvalidInput("synth_corpus: slide must be at least 32x32");
    }
    const int h = cfg.height;
    const int w = cfg.width;
    const double margin_y = cfg.margin_fraction * h;
    const double margin_x = cfg.margin_fraction * w;

    std::vector<SlideImage> out;
    out.reserve(static_cast<std::size_t>(n_slides));
    for (int i = 0; i < n_slides; ++i) {
        const int k = i % classes;
        Rng rng = make_rng(seed, "slide", static_cast<std::uint64_t>(i));

        const double hue_jitter = uniform(rng, -6.0, 6.0);
        const double sat_scale = uniform(rng, 0.85, 1.15);
        const double blob_scale = uniform(rng, 0.8, 1.25);
        const double val_shift = uniform(rng, -0.04, 0.04);

        const double stroma_hue = 335.0 - k * cfg.hue_separation + hue_jitter;
        const double nucleus_hue = stroma_hue - 45.0;
        const double density = (40.0 + 50.0 * k) / 10000.0; // nuclei per tissue pixel
        const double radius = (3.0 + 1.2 * k) * blob_scale * (std::min(h, w) / 384.0 + 0.5) / 1.5;

        std::vector<detail::Ellipse> blobs;
        const int n_ell = uniform_int(rng, 2, 4);
        for (int e = 0; e < n_ell; ++e) {
            detail::Ellipse el{};
            const double span_y = h / 2.0 - margin_y;
            const double span_x = w / 2.0 - margin_x;
            el.ry = uniform(rng, 0.6, 0.95) * span_y / 1.25;
            el.rx = uniform(rng, 0.6, 0.95) * span_x / 1.25;
            el.wobble = uniform(rng, 0.05, 0.2);
            el.phase = uniform(rng, 0.0, 2 * std::numbers::pi);
            const double lim_y = span_y - el.ry * (1.0 + el.wobble);
            const double lim_x = span_x - el.rx * (1.0 + el.wobble);
            el.cy = h / 2.0 + uniform(rng, -lim_y, lim_y);
            el.cx = w / 2.0 + uniform(rng, -lim_x, lim_x);
            blobs.push_back(el);
        }
        const double fy = uniform(rng, 0.03, 0.08);
        const double fx = uniform(rng, 0.03, 0.08);
        const double ph1 = uniform(rng, 0.0, 6.28);
        const double ph2 = uniform(rng, 0.0, 6.28);

        SlideImage s;
        s.pixels = Image(h, w);
        s.class_label = class_name(k, classes);
        char id[32];
        std::snprintf(id, sizeof(id), "slide_%03d", i);
        s.slide_id = id;

        std::vector<std::uint8_t> tissue(static_cast<std::size_t>(h) * w, 0);
        std::normal_distribution<double> grain(0.0, 1.0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                bool inside = false;
                for (const auto& el : blobs) {
                    if (el.contains(y, x)) {
                        inside = true;
                        break;
                    }
                }
                tissue[static_cast<std::size_t>(y) * w + x] = inside;
                std::array<float, 3> rgb{};
                if (inside) {
                    const double wave = std::sin(fy * y + ph1) * std::sin(fx * x + ph2);
                    const double v = 0.86 + val_shift + 0.05 * wave + 0.015 * grain(rng);
                    const double sat = (0.32 + 0.05 * std::cos(fx * y - ph2)) * sat_scale;
                    rgb = hsv_to_rgb(stroma_hue + 3.0 * wave, sat, v);
                } else {
                    const double base = 0.95;
                    rgb = {static_cast<float>(base + 0.006 * grain(rng)), static_cast<float>(base + 0.006 * grain(rng)),
                           static_cast<float>(base + 0.006 * grain(rng))};
                }
                for (int c = 0; c < 3; ++c) {
                    s.pixels.at(c, y, x) = std::clamp(rgb[static_cast<std::size_t>(c)], 0.0f, 1.0f);
                }
            }
        }

        std::size_t tissue_px = 0;
        for (auto t : tissue) {
            tissue_px += t;
        }
        const int n_nuclei = static_cast<int>(density * static_cast<double>(tissue_px));
        for (int n = 0; n < n_nuclei; ++n) {
            const int cy = uniform_int(rng, 0, h - 1);
            const int cx = uniform_int(rng, 0, w - 1);
            const double r = radius * uniform(rng, 0.7, 1.3);
            const double nh = nucleus_hue + uniform(rng, -5.0, 5.0);
            const auto rgb = hsv_to_rgb(nh, 0.6 * sat_scale, 0.45 + val_shift);
            if (tissue[static_cast<std::size_t>(cy) * w + cx] == 0) {
                continue;
            }
            const int rr = static_cast<int>(std::ceil(r));
            for (int y = std::max(0, cy - rr); y <= std::min(h - 1, cy + rr); ++y) {
                for (int x = std::max(0, cx - rr); x <= std::min(w - 1, cx + rr); ++x) {
                    if (tissue[static_cast<std::size_t>(y) * w + x] == 0) {
                        continue;
                    }
                    const double d = std::hypot(y - cy, x - cx) / r;
                    if (d >= 1.0) {
                        continue;
                    }
                    const double alpha = std::clamp(2.5 * (1.0 - d), 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) {
                        float& p = s.pixels.at(c, y, x);
                        p = static_cast<float>((1.0 - alpha) * p + alpha * rgb[static_cast<std::size_t>(c)]);
                    }
                }
            }
        }
        quantize_8bit(s.pixels);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace simgan::corpus
