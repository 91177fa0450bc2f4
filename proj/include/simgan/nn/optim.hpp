#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/random.hpp"
#include "simgan/nn/module.hpp"

namespace simgan::nn {

/// Adam with bias correction (Kingma & Ba).
class Adam {
public:
    Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
    {
        for (Parameter* p : params_) {
            m_.emplace_back(p->value.size(), 0.0f);
            v_.emplace_back(p->value.size(), 0.0f);
        }
    }

    void step()
    {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        const auto b1 = static_cast<float>(beta1_);
        const auto b2 = static_cast<float>(beta2_);
        const auto step = static_cast<float>(lr_ / c1);
        const auto inv_c2 = static_cast<float>(1.0 / std::sqrt(c2));
        const auto eps = static_cast<float>(eps_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            float* w = params_[k]->value.data();
            const float* g = params_[k]->grad.data();
            float* m = m_[k].data();
            float* v = v_[k].data();
            const std::size_t n = params_[k]->value.size();
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_c2 + eps);
            }
        }
    }

    void zero_grad()
    {
        for (Parameter* p : params_) {
            p->grad.zero();
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    [[nodiscard]] double lr() const { return lr_; }
    [[nodiscard]] const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

/// Adagrad (Duchi et al.), zero initial accumulator.
class Adagrad {
public:
    Adagrad(std::vector<Parameter*> params, double lr, double eps = 1e-10)
        : params_(std::move(params)), lr_(lr), eps_(eps)
    {
        for (Parameter* p : params_) {
            sum_.emplace_back(p->value.size(), 0.0f);
        }
    }

    void step()
    {
        const auto lr = static_cast<float>(lr_);
        const auto eps = static_cast<float>(eps_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            float* w = params_[k]->value.data();
            const float* g = params_[k]->grad.data();
            float* s = sum_[k].data();
            const std::size_t n = params_[k]->value.size();
            for (std::size_t i = 0; i < n; ++i) {
                s[i] += g[i] * g[i];
                w[i] -= lr * g[i] / (std::sqrt(s[i]) + eps);
            }
        }
    }

    void zero_grad()
    {
        for (Parameter* p : params_) {
            p->grad.zero();
        }
    }

    [[nodiscard]] const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    double lr_, eps_;
    std::vector<std::vector<float>> sum_;
};

/// Per-component value clipping into [-clip, clip].
inline void clip_values(std::span<float> values, double clip)
{
    if (!(clip > 0.0)) {
        throw InvalidInput("clip value must be positive");
    }
    const auto c = static_cast<float>(clip);
    for (float& v : values) {
        v = std::clamp(v, -c, c);
    }
}

inline void clip_gradients(const std::vector<Parameter*>& params, double clip)
{
    for (Parameter* p : params) {
        clip_values(p->grad.span(), clip);
    }
}

/// Learning rate of a step schedule after `epoch` completed epochs.
inline double step_lr(double base_lr, int epoch, int step_size, double gamma)
{
    if (step_size <= 0) {
        throw InvalidInput("step_lr: step size must be positive");
    }
    return base_lr * std::pow(gamma, epoch / step_size);
}

inline void fill_normal(Tensor& t, Rng& rng, double mean, double stddev)
{
    std::normal_distribution<double> dist(mean, stddev);
    for (float& v : t.vec()) {
        v = static_cast<float>(dist(rng));
    }
}

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    for (float& v : t.vec()) {
        v = static_cast<float>(dist(rng));
    }
}

} // namespace simgan::nn
