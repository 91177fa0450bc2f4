#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/random.hpp"

namespace simgan::metrics {

namespace detail {

inline double sorted_sum(std::vector<double>& v)
{
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s;
}

inline double cubic_kernel(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j)
{
    double dot = 0.0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
        dot += a(i, k) * b(j, k);
    }
    const double v = dot / static_cast<double>(a.cols()) + 1.0;
    return v * v * v;
}

} // namespace detail

/// Unbiased MMD^2 with the cubic polynomial kernel k(x,y) = (x.y/d + 1)^3.
/// Rows are samples. Kernel sums are accumulated in sorted order, so the value
/// does not depend on sample order.
inline double kid(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
{
    const Eigen::Index n = x.rows();
    const Eigen::Index m = y.rows();
    if (n < 2 || m < 2) {
        throw InvalidInput("kid: need at least 2 samples on each side");
    }
    if (x.cols() != y.cols()) {
        throw InvalidInput("kid: feature dimensions differ");
    }
    std::vector<double> buf;
    auto within = [&](const Eigen::MatrixXd& a) {
        buf.clear();
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
                buf.push_back(detail::cubic_kernel(a, i, a, j));
            }
        }
        return 2.0 * detail::sorted_sum(buf) / static_cast<double>(a.rows() * (a.rows() - 1));
    };
    const double sxx = within(x);
    const double syy = within(y);
    buf.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            buf.push_back(detail::cubic_kernel(x, i, y, j));
        }
    }
    const double sxy = detail::sorted_sum(buf) / static_cast<double>(n * m);
    return sxx + syy - 2.0 * sxy;
}

/// Mean KID over `blocks` random disjoint-per-side subsets of `block_size` rows.
inline double kid_blocks(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int blocks, int block_size,
                         std::uint64_t seed)
{
    if (blocks <= 1 || block_size <= 0) {
        return kid(x, y);
    }
    Rng rng = make_rng(seed, "kid-blocks");
    const int bx = std::min<int>(block_size, static_cast<int>(x.rows()));
    const int by = std::min<int>(block_size, static_cast<int>(y.rows()));
    double total = 0.0;
    for (int b = 0; b < blocks; ++b) {
        std::vector<int> ix(static_cast<std::size_t>(x.rows()));
        std::vector<int> iy(static_cast<std::size_t>(y.rows()));
        std::iota(ix.begin(), ix.end(), 0);
        std::iota(iy.begin(), iy.end(), 0);
        std::shuffle(ix.begin(), ix.end(), rng);
        std::shuffle(iy.begin(), iy.end(), rng);
        Eigen::MatrixXd sx(bx, x.cols());
        Eigen::MatrixXd sy(by, y.cols());
        for (int i = 0; i < bx; ++i) {
            sx.row(i) = x.row(ix[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < by; ++i) {
            sy.row(i) = y.row(iy[static_cast<std::size_t>(i)]);
        }
        total += kid(sx, sy);
    }
    return total / blocks;
}

} // namespace simgan::metrics
