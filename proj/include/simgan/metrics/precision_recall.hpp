#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <vector>

#include "simgan/core/error.hpp"

namespace simgan::metrics {

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

namespace detail {

inline Eigen::MatrixXd pairwise_dist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    Eigen::MatrixXd d(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            d(i, j) = (a.row(i) - b.row(j)).norm();
        }
    }
    return d;
}

/// Distance from each row to its k-th nearest other row.
inline Eigen::VectorXd knn_radii(const Eigen::MatrixXd& x, int k)
{
    const Eigen::MatrixXd d = pairwise_dist(x, x);
    Eigen::VectorXd r(x.rows());
    std::vector<double> row;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        row.clear();
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            if (j != i) {
                row.push_back(d(i, j));
            }
        }
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
        r(i) = row[static_cast<std::size_t>(k - 1)];
    }
    return r;
}

/// Fraction of `query` rows inside at least one ball (support[j], radii[j]).
inline double coverage(const Eigen::MatrixXd& support, const Eigen::VectorXd& radii, const Eigen::MatrixXd& query)
{
    const Eigen::MatrixXd d = pairwise_dist(query, support);
    long inside = 0;
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        for (Eigen::Index j = 0; j < support.rows(); ++j) {
            if (d(i, j) <= radii(j)) {
                ++inside;
                break;
            }
        }
    }
    return static_cast<double>(inside) / static_cast<double>(query.rows());
}

} // namespace detail

/// k-NN manifold precision and recall. Rows are samples.
inline PrecisionRecall gen_precision_recall(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k = 3)
{
    if (k < 1 || k >= real.rows() || k >= fake.rows()) {
        throw InvalidInput("gen_precision_recall: need k >= 1 and more than k points in each set");
    }
    if (real.cols() != fake.cols()) {
        throw InvalidInput("gen_precision_recall: feature dimensions differ");
    }
    PrecisionRecall pr;
    pr.precision = detail::coverage(real, detail::knn_radii(real, k), fake);
    pr.recall = detail::coverage(fake, detail::knn_radii(fake, k), real);
    const double s = pr.precision + pr.recall;
    pr.f1 = s > 0 ? 2.0 * pr.precision * pr.recall / s : 0.0;
    return pr;
}

} // namespace simgan::metrics
