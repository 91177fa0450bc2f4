#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/tensor.hpp"

namespace simgan::snn {

/// y*d^2 + (1-y)*max(0, m-d)^2
inline double contrastive_loss(double d, int y, double margin)
{
    if (d < 0 || margin <= 0 || (y != 0 && y != 1)) {
        throw InvalidInput("contrastive_loss: need d >= 0, margin > 0, y in {0,1}");
    }
    const double hinge = std::max(0.0, margin - d);
    return y * d * d + (1 - y) * hinge * hinge;
}

/// d/dd of contrastive_loss.
inline double contrastive_loss_grad(double d, int y, double margin)
{
    return y == 1 ? 2.0 * d : -2.0 * std::max(0.0, margin - d);
}

/// Mean squared pixel error.
inline double reconstruction_loss(const Image& a, const Image& b)
{
    if (a.height() != b.height() || a.width() != b.width()) {
        throw InvalidInput("reconstruction_loss: image shapes differ");
    }
    auto pa = a.pixels();
    auto pb = b.pixels();
    double s = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = static_cast<double>(pa[i]) - pb[i];
        s += d * d;
    }
    return pa.empty() ? 0.0 : s / static_cast<double>(pa.size());
}

/// Sum of squared errors; writes scale*2*(recon-target) into grad.
inline double squared_error(const Tensor& recon, const Tensor& target, double scale, Tensor& grad)
{
    if (recon.shape() != target.shape()) {
        throw InvalidInput("reconstruction shape " + recon.shape().str() + " != input " + target.shape().str());
    }
    grad = Tensor(recon.shape());
    const float* r = recon.data();
    const float* t = target.data();
    float* g = grad.data();
    double s = 0.0;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        const double d = static_cast<double>(r[i]) - t[i];
        s += d * d;
        g[i] = static_cast<float>(2.0 * scale * d);
    }
    return s;
}

/// Gradient of a loss w.r.t. raw embedding e, given the gradient w.r.t. u = e/|e|.
inline Eigen::VectorXd normalize_backward(const Eigen::VectorXd& e, const Eigen::VectorXd& grad_u)
{
    const double norm = e.norm();
    if (norm < 1e-12) {
        return Eigen::VectorXd::Zero(e.size());
    }
    const Eigen::VectorXd u = e / norm;
    return (grad_u - u * u.dot(grad_u)) / norm;
}

} // namespace simgan::snn
