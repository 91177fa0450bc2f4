#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>

namespace simgan::nn {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapF = Eigen::Map<RowMatrixF>;
using ConstMapF = Eigen::Map<const RowMatrixF>;

/// Left-to-right sum. Eigen's vectorised reductions over a Map peel an
/// address-dependent head, which makes results vary with buffer alignment.
inline float plain_sum(const float* p, int n, int stride)
{
    float s = 0.0f;
    for (int i = 0; i < n; ++i) {
        s += p[static_cast<std::ptrdiff_t>(i) * stride];
    }
    return s;
}

struct ConvGeometry {
    int channels;
    int height;
    int width;
    int kernel;
    int stride;
    int pad;

    [[nodiscard]] int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    [[nodiscard]] int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    [[nodiscard]] int patch_size() const { return channels * kernel * kernel; }
    [[nodiscard]] int positions() const { return out_height() * out_width(); }
};

/// Unfold one CHW sample into a (C*k*k) x (Ho*Wo) row-major matrix.
inline void im2col(const float* x, const ConvGeometry& g, float* cols)
{
    const int ho = g.out_height();
    const int wo = g.out_width();
    const int positions = ho * wo;
    for (int c = 0; c < g.channels; ++c) {
        const float* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ky = 0; ky < g.kernel; ++ky) {
            for (int kx = 0; kx < g.kernel; ++kx) {
                float* dst = cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * positions;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    float* row = dst + oy * wo;
                    if (iy < 0 || iy >= g.height) {
                        std::fill_n(row, wo, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * g.width;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad;
                        row[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-add columns back into a CHW sample (not cleared).
inline void col2im(const float* cols, const ConvGeometry& g, float* x)
{
    const int ho = g.out_height();
    const int wo = g.out_width();
    const int positions = ho * wo;
    for (int c = 0; c < g.channels; ++c) {
        float* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ky = 0; ky < g.kernel; ++ky) {
            for (int kx = 0; kx < g.kernel; ++kx) {
                const float* src = cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * positions;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.height) {
                        continue;
                    }
                    float* dst = plane + static_cast<std::size_t>(iy) * g.width;
                    const float* row = src + oy * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad;
                        if (ix >= 0 && ix < g.width) {
                            dst[ix] += row[ox];
                        }
                    }
                }
            }
        }
    }
}

} // namespace simgan::nn
