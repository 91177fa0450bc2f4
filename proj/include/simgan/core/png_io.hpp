#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"

namespace simgan {

/// 8-bit RGB, interleaved, row-major.
inline std::vector<std::uint8_t> to_rgb8(const Image& img)
{
    std::vector<std::uint8_t> buf(img.area() * 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                buf[(static_cast<std::size_t>(y) * img.width() + x) * 3 + c]
                    = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    return buf;
}

inline Image from_rgb8(const std::uint8_t* buf, int height, int width)
{
    Image img(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * width + x) * 3 + c]) / 255.0f;
            }
        }
    }
    return img;
}

inline void write_png(const std::filesystem::path& path, const Image& img)
{
    if (img.empty()) {
        throw InvalidInput("write_png: empty image");
    }
    png_image meta;
    std::memset(&meta, 0, sizeof(meta));
    meta.version = PNG_IMAGE_VERSION;
    meta.width = static_cast<png_uint_32>(img.width());
    meta.height = static_cast<png_uint_32>(img.height());
    meta.format = PNG_FORMAT_RGB;
    auto buf = to_rgb8(img);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (png_image_write_to_file(&meta, path.c_str(), 0, buf.data(), 0, nullptr) == 0) {
        throw std::runtime_error("write_png " + path.string() + ": " + meta.message);
    }
}

/// Encode to an in-memory PNG byte string.
inline std::string encode_png(const Image& img)
{
    png_image meta;
    std::memset(&meta, 0, sizeof(meta));
    meta.version = PNG_IMAGE_VERSION;
    meta.width = static_cast<png_uint_32>(img.width());
    meta.height = static_cast<png_uint_32>(img.height());
    meta.format = PNG_FORMAT_RGB;
    auto buf = to_rgb8(img);
    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&meta, nullptr, &size, 0, buf.data(), 0, nullptr) == 0) {
        throw std::runtime_error(std::string("encode_png: ") + meta.message);
    }
    std::string out(size, '\0');
    if (png_image_write_to_memory(&meta, out.data(), &size, 0, buf.data(), 0, nullptr) == 0) {
        throw std::runtime_error(std::string("encode_png: ") + meta.message);
    }
    out.resize(size);
    return out;
}

namespace detail {
inline Image finish_png_read(png_image& meta)
{
    meta.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(meta));
    if (png_image_finish_read(&meta, nullptr, buf.data(), 0, nullptr) == 0) {
        std::string msg = meta.message;
        png_image_free(&meta);
        throw InvalidInput("png decode failed: " + msg);
    }
    return from_rgb8(buf.data(), static_cast<int>(meta.height), static_cast<int>(meta.width));
}
} // namespace detail

inline Image read_png(const std::filesystem::path& path)
{
    png_image meta;
    std::memset(&meta, 0, sizeof(meta));
    meta.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&meta, path.c_str()) == 0) {
        throw InvalidInput("read_png " + path.string() + ": " + meta.message);
    }
    return detail::finish_png_read(meta);
}

inline Image decode_png(const std::string& bytes)
{
    png_image meta;
    std::memset(&meta, 0, sizeof(meta));
    meta.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&meta, bytes.data(), bytes.size()) == 0) {
        throw InvalidInput(std::string("decode_png: ") + meta.message);
    }
    return detail::finish_png_read(meta);
}

} // namespace simgan
