#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"

namespace simgan::corpus {

struct SlideImage {
    Image pixels;
    std::string slide_id;
    std::string class_label;
};

/// Throws unless the slide is a valid source for `patch_size` patches.
inline void validate(const SlideImage& s, int patch_size = 1)
{
    if (s.pixels.empty()) {
        throw InvalidInput("slide '" + s.slide_id + "' has zero area");
    }
    if (s.pixels.height() < patch_size || s.pixels.width() < patch_size) {
        throw InvalidInput("slide '" + s.slide_id + "' is smaller than the patch size");
    }
    if (!s.pixels.in_unit_range()) {
        throw InvalidInput("slide '" + s.slide_id + "' has pixels outside [0,1]");
    }
}

struct GridPos {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct Patch {
    Image pixels;
    std::string source_slide;
    GridPos grid_pos;
    /// Top-left pixel of the window in the source slide.
    int origin_y = 0;
    int origin_x = 0;
    std::string class_label;
};

class TissueMask {
public:
    TissueMask() = default;
    TissueMask(int height, int width, std::uint8_t fill = 0)
        : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, fill)
    {
    }

    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int width() const { return width_; }
    std::uint8_t& at(int y, int x) { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    [[nodiscard]] std::uint8_t at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::vector<std::uint8_t>& bits() { return bits_; }

    [[nodiscard]] double coverage_fraction() const
    {
        if (bits_.empty()) {
            return 0.0;
        }
        std::size_t on = 0;
        for (auto b : bits_) {
            on += b != 0;
        }
        return static_cast<double>(on) / static_cast<double>(bits_.size());
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> bits_;
};

enum class PairLevel { Sim, DissimA, DissimB };

inline std::string_view to_string(PairLevel l)
{
    switch (l) {
    case PairLevel::Sim:
        return "SIM";
    case PairLevel::DissimA:
        return "DISSIM_A";
    case PairLevel::DissimB:
        return "DISSIM_B";
    }
    return "SIM";
}

inline PairLevel level_from_string(std::string_view s)
{
    if (s == "SIM") {
        return PairLevel::Sim;
    }
    if (s == "DISSIM_A") {
        return PairLevel::DissimA;
    }
    if (s == "DISSIM_B") {
        return PairLevel::DissimB;
    }
    throw InvalidInput("unknown pair level '" + std::string(s) + "'");
}

inline int label_for(PairLevel l) { return l == PairLevel::Sim ? 1 : 0; }

/// `b` is the augmented view; `b_source` the un-augmented patch it was derived from.
struct PairSample {
    Patch a;
    Patch b;
    Patch b_source;
    int label = 0;
    PairLevel level = PairLevel::Sim;
    std::uint64_t seed = 0;
};

struct AugConfig {
    double brightness = 0.2;   ///< additive offset drawn from [-brightness, brightness]
    double contrast_lo = 0.8;  ///< multiplicative contrast about the image mean
    double contrast_hi = 1.2;
    double noise_sigma = 0.02; ///< Gaussian noise, truncated at 4 sigma

    /// Largest possible per-pixel change an augmentation can make.
    [[nodiscard]] double max_abs_change() const
    {
        const double contrast = std::max(std::abs(contrast_lo - 1.0), std::abs(contrast_hi - 1.0));
        return contrast + brightness + 4.0 * noise_sigma;
    }
};

} // namespace simgan::corpus
