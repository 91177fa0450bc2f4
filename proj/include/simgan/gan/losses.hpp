#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "simgan/core/error.hpp"

namespace simgan::gan {

inline constexpr double kLogEps = 1e-7;

inline double clamp_prob(double p) { return std::clamp(p, kLogEps, 1.0 - kLogEps); }

struct DLoss {
    double real = 0.0;
    double fake = 0.0;
    double total = 0.0;
};

/// Binary cross-entropy of probabilities against a constant target, averaged.
inline double bce_mean(std::span<const double> probs, double target)
{
    if (probs.empty()) {
        throw InvalidInput("loss over an empty probability list");
    }
    double s = 0.0;
    for (double p : probs) {
        const double q = clamp_prob(p);
        s -= target * std::log(q) + (1.0 - target) * std::log(1.0 - q);
    }
    return s / static_cast<double>(probs.size());
}

/// d bce_mean / d p_i (clamped probabilities).
inline std::vector<double> bce_mean_grad(std::span<const double> probs, double target)
{
    std::vector<double> g(probs.size());
    const double n = static_cast<double>(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double q = clamp_prob(probs[i]);
        g[i] = (-target / q + (1.0 - target) / (1.0 - q)) / n;
    }
    return g;
}

/// L_D_real = -mean log p_real (against real_target), L_D_fake = -mean log(1 - p_fake).
inline DLoss d_loss(std::span<const double> real_probs, std::span<const double> fake_probs, double real_target = 1.0)
{
    DLoss l;
    l.real = bce_mean(real_probs, real_target);
    l.fake = bce_mean(fake_probs, 0.0);
    l.total = l.real + l.fake;
    return l;
}

/// Non-saturating generator loss -mean log D(G(z)).
inline double g_loss(std::span<const double> fake_probs) { return bce_mean(fake_probs, 1.0); }

inline std::vector<double> g_loss_grad(std::span<const double> fake_probs) { return bce_mean_grad(fake_probs, 1.0); }

inline double compute_reward(std::span<const double> scores, double weight)
{
    if (scores.empty()) {
        throw InvalidInput("compute_reward: no similarity scores");
    }
    if (weight < 0) {
        throw InvalidInput("compute_reward: reward weight must be >= 0");
    }
    double s = 0.0;
    for (double v : scores) {
        s += v;
    }
    return weight * (s / static_cast<double>(scores.size()));
}

/// The reward is a constant w.r.t. the discriminator parameters.
inline double modified_d_loss(double l_d, double reward)
{
    if (reward < 0) {
        throw InvalidInput("modified_d_loss: reward must be >= 0");
    }
    return l_d - reward;
}

} // namespace simgan::gan
