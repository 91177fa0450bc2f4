#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/snn/score.hpp"

namespace simgan::metrics {

struct FeatureStats {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    long n = 0;
};

/// Mean and unbiased covariance of the rows of `feats`.
inline FeatureStats feature_stats(const Eigen::MatrixXd& feats)
{
    if (feats.rows() < 2) {
        throw InvalidInput("feature_stats: need at least 2 samples");
    }
    FeatureStats s;
    s.n = feats.rows();
    s.mu = feats.colwise().mean().transpose();
    const Eigen::MatrixXd centered = feats.rowwise() - s.mu.transpose();
    s.sigma = (centered.transpose() * centered) / static_cast<double>(s.n - 1);
    s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
    return s;
}

template <snn::Embedder E>
Eigen::MatrixXd embed_all(const E& extractor, std::span<const Image> images)
{
    if (images.empty()) {
        throw InvalidInput("embed_all: no images");
    }
    const int h = images.front().height();
    const int w = images.front().width();
    Eigen::MatrixXd out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height() != h || images[i].width() != w) {
            throw InvalidInput("embed_all: images must share one resolution");
        }
        const Eigen::VectorXd e = extractor.embed(images[i]);
        if (i == 0) {
            out.resize(static_cast<Eigen::Index>(images.size()), e.size());
        }
        out.row(static_cast<Eigen::Index>(i)) = e.transpose();
    }
    return out;
}

template <snn::Embedder E>
FeatureStats feature_stats(std::span<const Image> images, const E& extractor)
{
    if (images.size() < 2) {
        throw InvalidInput("feature_stats: need at least 2 images");
    }
    return feature_stats(embed_all(extractor, images));
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues down to
/// -1e-8 * max(1, |lambda|max) are treated as zero.
inline Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& a)
{
    if (a.rows() != a.cols()) {
        throw InvalidInput("matrix_sqrt: matrix must be square");
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw NumericDomainError("matrix_sqrt: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) {
        throw NumericDomainError("matrix_sqrt: eigendecomposition failed");
    }
    Eigen::VectorXd ev = es.eigenvalues();
    const double tol = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -tol) {
            throw NumericDomainError("matrix_sqrt: matrix is indefinite (eigenvalue " + std::to_string(ev(i)) + ")");
        }
        ev(i) = std::sqrt(std::max(0.0, ev(i)));
    }
    const Eigen::MatrixXd& v = es.eigenvectors();
    Eigen::MatrixXd s = v * ev.asDiagonal() * v.transpose();
    return 0.5 * (s + s.transpose());
}

/// Frechet distance between two Gaussians. Tr((Sa Sb)^1/2) is evaluated as
/// Tr((Sa^1/2 Sb Sa^1/2)^1/2), which has the same eigenvalues and stays symmetric.
inline double fid(const FeatureStats& a, const FeatureStats& b)
{
    if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows()) {
        throw InvalidInput("fid: feature dimensions differ");
    }
    const double mean_term = (a.mu - b.mu).squaredNorm();
    const Eigen::MatrixXd sa = matrix_sqrt(a.sigma);
    const Eigen::MatrixXd m = sa * b.sigma * sa;
    const double cross = matrix_sqrt(0.5 * (m + m.transpose())).trace();
    const double value = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
    return std::max(0.0, value);
}

} // namespace simgan::metrics
