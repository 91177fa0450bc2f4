#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "simgan/core/digest.hpp"
#include "simgan/core/error.hpp"
#include "simgan/core/tensor.hpp"

namespace simgan {

/// Three-channel planar (CHW) image with values in [0, 1].
class Image {
public:
    static constexpr int channels = 3;

    Image() = default;
    Image(int height, int width, float fill = 0.0f)
        : height_(height), width_(width),
          pixels_(static_cast<std::size_t>(channels) * height * width, fill)
    {
        if (height < 0 || width < 0) {
            throw InvalidInput("image dimensions must be non-negative");
        }
    }

    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] std::size_t area() const { return static_cast<std::size_t>(height_) * width_; }
    [[nodiscard]] bool empty() const { return area() == 0; }

    float& at(int c, int y, int x) { return pixels_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
    [[nodiscard]] float at(int c, int y, int x) const
    {
        return pixels_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    [[nodiscard]] std::span<const float> pixels() const { return pixels_; }
    std::span<float> pixels() { return pixels_; }

    [[nodiscard]] bool in_unit_range() const
    {
        return std::all_of(pixels_.begin(), pixels_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
    }

    /// Crop [y, y+h) x [x, x+w).
    [[nodiscard]] Image crop(int y, int x, int h, int w) const
    {
        if (y < 0 || x < 0 || h < 0 || w < 0 || y + h > height_ || x + w > width_) {
            throw InvalidInput("crop window outside image bounds");
        }
        Image out(h, w);
        for (int c = 0; c < channels; ++c) {
            for (int r = 0; r < h; ++r) {
                const float* src = &pixels_[(static_cast<std::size_t>(c) * height_ + y + r) * width_ + x];
                std::copy_n(src, w, &out.at(c, r, 0));
            }
        }
        return out;
    }

    /// SHA-256 of the raw float bytes plus the shape.
    [[nodiscard]] std::string content_digest() const
    {
        Sha256 h;
        const std::int32_t dims[2] = {height_, width_};
        h.update(dims, sizeof(dims));
        h.update(std::span<const float>(pixels_));
        return h.hex();
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> pixels_;
};

/// Round every pixel to the nearest multiple of 1/255 so PNG storage is lossless.
inline void quantize_8bit(Image& img)
{
    for (float& v : img.pixels()) {
        v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
    }
}

/// Bilinear resample with half-pixel centres.
inline Image resize_bilinear(const Image& src, int height, int width)
{
    if (src.empty() || height <= 0 || width <= 0) {
        throw InvalidInput("resize_bilinear: empty source or target");
    }
    Image out(height, width);
    const double sy = static_cast<double>(src.height()) / height;
    const double sx = static_cast<double>(src.width()) / width;
    for (int y = 0; y < height; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, src.height() - 1);
        double ay = fy - y0;
        for (int x = 0; x < width; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, src.width() - 1);
            double ax = fx - x0;
            for (int c = 0; c < Image::channels; ++c) {
                double top = src.at(c, y0, x0) * (1 - ax) + src.at(c, y0, x1) * ax;
                double bot = src.at(c, y1, x0) * (1 - ax) + src.at(c, y1, x1) * ax;
                out.at(c, y, x) = static_cast<float>(top * (1 - ay) + bot * ay);
            }
        }
    }
    return out;
}

/// Area downsample by an integer factor (height and width must divide).
inline Image downsample_box(const Image& src, int factor)
{
    if (factor < 1 || src.height() % factor != 0 || src.width() % factor != 0) {
        throw InvalidInput("downsample_box: factor must divide image size");
    }
    if (factor == 1) {
        return src;
    }
    Image out(src.height() / factor, src.width() / factor);
    const float inv = 1.0f / static_cast<float>(factor * factor);
    for (int c = 0; c < Image::channels; ++c) {
        for (int y = 0; y < out.height(); ++y) {
            for (int x = 0; x < out.width(); ++x) {
                float s = 0.0f;
                for (int dy = 0; dy < factor; ++dy) {
                    for (int dx = 0; dx < factor; ++dx) {
                        s += src.at(c, y * factor + dy, x * factor + dx);
                    }
                }
                out.at(c, y, x) = s * inv;
            }
        }
    }
    return out;
}

/// Pack images of equal size into an NCHW batch, mapping [0,1] -> [lo, hi].
inline Tensor to_batch(std::span<const Image> images, float lo = 0.0f, float hi = 1.0f)
{
    if (images.empty()) {
        throw InvalidInput("to_batch: no images");
    }
    const int h = images.front().height();
    const int w = images.front().width();
    Tensor t(static_cast<int>(images.size()), Image::channels, h, w);
    const float scale = hi - lo;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height() != h || images[i].width() != w) {
            throw InvalidInput("to_batch: images must share one resolution");
        }
        auto px = images[i].pixels();
        float* dst = t.sample(static_cast<int>(i));
        for (std::size_t k = 0; k < px.size(); ++k) {
            dst[k] = lo + scale * px[k];
        }
    }
    return t;
}

/// Inverse of to_batch for one sample, clamping to [0,1].
inline Image from_batch(const Tensor& t, int index, float lo = 0.0f, float hi = 1.0f)
{
    if (t.c() != Image::channels) {
        throw InvalidInput("from_batch: tensor must have 3 channels");
    }
    Image img(t.h(), t.w());
    const float* src = t.sample(index);
    auto px = img.pixels();
    const float inv = 1.0f / (hi - lo);
    for (std::size_t k = 0; k < px.size(); ++k) {
        px[k] = std::clamp((src[k] - lo) * inv, 0.0f, 1.0f);
    }
    return img;
}

} // namespace simgan
