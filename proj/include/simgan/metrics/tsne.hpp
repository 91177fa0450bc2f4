#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/random.hpp"

namespace simgan::metrics {

struct TsnePoint {
    double x = 0.0;
    double y = 0.0;
    std::string source; ///< "real" or "generated"
};

struct TsneParams {
    int pca_dims = 50;
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    int exaggeration_iters = 100;
    double exaggeration = 12.0;
};

/// Projection onto the top `dims` principal axes. Axis signs are fixed so the
/// largest-magnitude loading is positive.
inline Eigen::MatrixXd pca(const Eigen::MatrixXd& x, int dims)
{
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (c.transpose() * c) / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const int d = static_cast<int>(x.cols());
    dims = std::min(dims, d);
    Eigen::MatrixXd basis(d, dims);
    for (int k = 0; k < dims; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k); // eigenvalues ascend
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) {
            v = -v;
        }
        basis.col(k) = v;
    }
    return c * basis;
}

namespace detail {

/// Symmetric joint probabilities with per-point bandwidth matched to `perplexity`.
inline Eigen::MatrixXd tsne_affinities(const Eigen::MatrixXd& x, double perplexity)
{
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
        }
    }
    const double target = std::log(perplexity);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double dmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) {
                dmin = std::min(dmin, d2(i, j));
            }
        }
        for (int it = 0; it < 200; ++it) {
            double sum = 0.0;
            double wsum = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double v = std::exp(-beta * (d2(i, j) - dmin));
                p(i, j) = v;
                sum += v;
                wsum += v * (d2(i, j) - dmin);
            }
            const double entropy = std::log(sum) + beta * wsum / sum;
            for (Eigen::Index j = 0; j < n; ++j) {
                p(i, j) /= sum;
            }
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) {
                break;
            }
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
    }
    Eigen::MatrixXd sym = (p + p.transpose()) / (2.0 * static_cast<double>(n));
    return sym.cwiseMax(1e-12);
}

} // namespace detail

/// Exact 2-D t-SNE of the rows of `x`.
inline Eigen::MatrixXd tsne(const Eigen::MatrixXd& x, std::uint64_t seed, const TsneParams& params = {})
{
    const Eigen::Index n = x.rows();
    if (n < 4) {
        throw InvalidInput("tsne: need at least 4 points");
    }
    const double perplexity = std::min(params.perplexity, static_cast<double>(n - 1) / 3.0);
    const Eigen::MatrixXd p = detail::tsne_affinities(x, perplexity);

    Rng rng = make_rng(seed, "tsne-init");
    Eigen::MatrixXd y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = normal(rng, 0.0, 1e-4);
        y(i, 1) = normal(rng, 0.0, 1e-4);
    }
    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    Eigen::MatrixXd num(n, n);
    Eigen::MatrixXd grad(n, 2);

    for (int it = 0; it < params.iterations; ++it) {
        const double exag = it < params.exaggeration_iters ? params.exaggeration : 1.0;
        const double momentum = it < 250 ? 0.5 : 0.8;
        double qsum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = v;
                num(j, i) = v;
                qsum += 2.0 * v;
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double gx = 0.0;
            double gy = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double q = std::max(num(i, j) / qsum, 1e-12);
                const double m = (exag * p(i, j) - q) * num(i, j);
                gx += m * (y(i, 0) - y(j, 0));
                gy += m * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4.0 * gx;
            grad(i, 1) = 4.0 * gy;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                const bool same = (grad(i, c) > 0) == (update(i, c) > 0);
                gains(i, c) = std::max(0.01, same ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
                update(i, c) = momentum * update(i, c) - params.learning_rate * gains(i, c) * grad(i, c);
                y(i, c) += update(i, c);
            }
        }
        const Eigen::RowVector2d mean = y.colwise().mean();
        y.rowwise() -= mean;
    }
    return y;
}

/// PCA then t-SNE over the stacked real and generated features.
inline std::vector<TsnePoint> tsne_export(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, std::uint64_t seed,
                                          const TsneParams& params = {})
{
    if (real.rows() + fake.rows() < 10) {
        throw InvalidInput("tsne_export: need at least 10 points in total");
    }
    if (real.rows() > 0 && fake.rows() > 0 && real.cols() != fake.cols()) {
        throw InvalidInput("tsne_export: feature dimensions differ");
    }
    const Eigen::Index d = real.rows() > 0 ? real.cols() : fake.cols();
    Eigen::MatrixXd all(real.rows() + fake.rows(), d);
    all.topRows(real.rows()) = real;
    all.bottomRows(fake.rows()) = fake;
    const Eigen::MatrixXd y = tsne(pca(all, params.pca_dims), seed, params);
    std::vector<TsnePoint> out;
    out.reserve(static_cast<std::size_t>(all.rows()));
    for (Eigen::Index i = 0; i < all.rows(); ++i) {
        out.push_back({y(i, 0), y(i, 1), i < real.rows() ? "real" : "generated"});
    }
    return out;
}

inline void write_tsne_csv(std::ostream& os, const std::vector<TsnePoint>& pts)
{
    os << "x,y,source\n";
    char buf[64];
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,", p.x, p.y);
        os << buf << p.source << '\n';
    }
}

inline std::string tsne_csv(const std::vector<TsnePoint>& pts)
{
    std::ostringstream os;
    write_tsne_csv(os, pts);
    return os.str();
}

} // namespace simgan::metrics
