#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "simgan/core/random.hpp"
#include "simgan/corpus/types.hpp"

namespace simgan::corpus {

/// Brightness, contrast (about the image mean) and truncated Gaussian noise.
inline Image augment(const Image& src, const AugConfig& cfg, std::uint64_t seed)
{
    if (cfg.brightness < 0 || cfg.noise_sigma < 0 || cfg.contrast_lo > cfg.contrast_hi) {
        throw InvalidInput("augment: invalid AugConfig");
    }
    Rng rng(seed);
    const double contrast = cfg.contrast_lo == cfg.contrast_hi ? cfg.contrast_lo
                                                               : uniform(rng, cfg.contrast_lo, cfg.contrast_hi);
    const double offset = cfg.brightness > 0 ? uniform(rng, -cfg.brightness, cfg.brightness) : 0.0;
    auto px = src.pixels();
    double mean = 0.0;
    for (float v : px) {
        mean += v;
    }
    mean = px.empty() ? 0.0 : mean / static_cast<double>(px.size());

    Image out = src;
    auto dst = out.pixels();
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < px.size(); ++i) {
        double n = 0.0;
        if (cfg.noise_sigma > 0) {
            n = std::clamp(noise(rng), -4.0, 4.0) * cfg.noise_sigma;
        }
        const double v = (px[i] - mean) * contrast + mean + offset + n;
        dst[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

/// Builds exactly `n_per_level` pairs at each level:
///   SIM      - a patch and an augmented view of itself (same slide),
///   DISSIM_A - two slides of the same class,
///   DISSIM_B - two different classes.
/// The `b` member of every pair is augmented with a per-pair seed.
inline std::vector<PairSample> build_pairs(const std::vector<Patch>& patches, int n_per_level, const AugConfig& aug,
                                           std::uint64_t seed)
{
    if (n_per_level < 0) {
        throw InvalidInput("build_pairs: n_per_level must be >= 0");
    }
    if (patches.empty()) {
        throw ConfigError("build_pairs: no patches to pair");
    }

    std::map<std::string, std::vector<std::size_t>> by_class;
    std::map<std::string, std::string> slide_class;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        by_class[patches[i].class_label].push_back(i);
        slide_class[patches[i].source_slide] = patches[i].class_label;
    }
    std::map<std::string, int> slides_per_class;
    for (const auto& [slide, cls] : slide_class) {
        ++slides_per_class[cls];
    }

    // candidates for the first member of a DISSIM_A pair
    std::vector<std::size_t> dissim_a_anchor;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (slides_per_class[patches[i].class_label] >= 2) {
            dissim_a_anchor.push_back(i);
        }
    }
    if (n_per_level > 0 && dissim_a_anchor.empty()) {
        throw ConfigError("build_pairs: level DISSIM_A is unconstructible (no class spans two slides)");
    }
    if (n_per_level > 0 && by_class.size() < 2) {
        throw ConfigError("build_pairs: level DISSIM_B is unconstructible (single class)");
    }

    Rng rng = make_rng(seed, "pairs");
    auto pick = [&](const std::vector<std::size_t>& from) {
        return from[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(from.size()) - 1))];
    };
    std::vector<std::size_t> all(patches.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }

    std::vector<PairSample> out;
    out.reserve(static_cast<std::size_t>(3 * n_per_level));
    auto emit = [&](std::size_t ia, std::size_t ib, PairLevel level) {
        PairSample p;
        p.a = patches[ia];
        p.b_source = patches[ib];
        p.seed = derive_seed(seed, "aug", out.size());
        p.b = p.b_source;
        p.b.pixels = augment(p.b_source.pixels, aug, p.seed);
        p.level = level;
        p.label = label_for(level);
        out.push_back(std::move(p));
    };

    for (int k = 0; k < n_per_level; ++k) {
        const std::size_t a = pick(all);
        emit(a, a, PairLevel::Sim);
    }
    for (int k = 0; k < n_per_level; ++k) {
        const std::size_t a = pick(dissim_a_anchor);
        std::vector<std::size_t> partners;
        for (std::size_t j : by_class[patches[a].class_label]) {
            if (patches[j].source_slide != patches[a].source_slide) {
                partners.push_back(j);
            }
        }
        emit(a, pick(partners), PairLevel::DissimA);
    }
    for (int k = 0; k < n_per_level; ++k) {
        const std::size_t a = pick(all);
        std::vector<std::size_t> partners;
        for (std::size_t j = 0; j < patches.size(); ++j) {
            if (patches[j].class_label != patches[a].class_label) {
                partners.push_back(j);
            }
        }
        emit(a, pick(partners), PairLevel::DissimB);
    }
    return out;
}

} // namespace simgan::corpus
