#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/nn/im2col.hpp"
#include "simgan/nn/module.hpp"

namespace simgan::nn {

class Conv2d final : public Module {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0, bool bias = true)
        : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
          weight_(Tensor(out_channels, in_channels, kernel, kernel)),
          bias_(Tensor(1, bias ? out_channels : 0, 1, 1))
    {
        if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || pad < 0) {
            throw InvalidInput("Conv2d: invalid geometry");
        }
    }

    [[nodiscard]] int in_channels() const { return in_; }
    [[nodiscard]] int out_channels() const { return out_; }
    [[nodiscard]] int kernel() const { return k_; }
    [[nodiscard]] int stride() const { return stride_; }
    [[nodiscard]] int pad() const { return pad_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }
    [[nodiscard]] const Parameter& weight() const { return weight_; }

    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        const ConvGeometry g = geometry(x);
        Tensor y(x.n(), out_, g.out_height(), g.out_width());
        const int positions = g.positions();
        std::vector<float> cols(pointwise() ? 0 : static_cast<std::size_t>(g.patch_size()) * positions);
        ConstMapF w(weight_.value.data(), out_, g.patch_size());
        for (int n = 0; n < x.n(); ++n) {
            const float* colptr = x.sample(n);
            if (!pointwise()) {
                im2col(x.sample(n), g, cols.data());
                colptr = cols.data();
            }
            ConstMapF c(colptr, g.patch_size(), positions);
            MapF out(y.sample(n), out_, positions);
            out.noalias() = w * c;
            if (has_bias_) {
                for (int o = 0; o < out_; ++o) {
                    out.row(o).array() += bias_.value[o];
                }
            }
        }
        return y;
    }

    Tensor forward(const Tensor& x) override
    {
        input_ = x;
        return infer(x);
    }

    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        const ConvGeometry g = geometry(input_);
        const int positions = g.positions();
        Tensor dx;
        if (need_input_grad) {
            dx = Tensor(input_.shape());
        }
        std::vector<float> cols(pointwise() ? 0 : static_cast<std::size_t>(g.patch_size()) * positions);
        std::vector<float> dcols(cols.size());
        ConstMapF w(weight_.value.data(), out_, g.patch_size());
        MapF dw(weight_.grad.data(), out_, g.patch_size());
        for (int n = 0; n < input_.n(); ++n) {
            ConstMapF go(grad_out.sample(n), out_, positions);
            if (trainable()) {
                const float* colptr = input_.sample(n);
                if (!pointwise()) {
                    im2col(input_.sample(n), g, cols.data());
                    colptr = cols.data();
                }
                ConstMapF c(colptr, g.patch_size(), positions);
                dw.noalias() += go * c.transpose();
                if (has_bias_) {
                    for (int o = 0; o < out_; ++o) {
                        bias_.grad[o] += plain_sum(go.row(o).data(), positions, 1);
                    }
                }
            }
            if (need_input_grad) {
                if (pointwise()) {
                    MapF d(dx.sample(n), in_, positions);
                    d.noalias() = w.transpose() * go;
                } else {
                    MapF d(dcols.data(), g.patch_size(), positions);
                    d.noalias() = w.transpose() * go;
                    col2im(dcols.data(), g, dx.sample(n));
                }
            }
        }
        return dx;
    }

    std::vector<Parameter*> parameters() override
    {
        if (has_bias_) {
            return {&weight_, &bias_};
        }
        return {&weight_};
    }
    [[nodiscard]] std::vector<const Parameter*> parameters() const override
    {
        if (has_bias_) {
            return {&weight_, &bias_};
        }
        return {&weight_};
    }
    [[nodiscard]] std::unique_ptr<Module> clone() const override { return std::make_unique<Conv2d>(*this); }
    [[nodiscard]] std::string_view kind() const override { return "conv2d"; }

private:
    [[nodiscard]] bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

    [[nodiscard]] ConvGeometry geometry(const Tensor& x) const
    {
        if (x.c() != in_) {
            throw InvalidInput("Conv2d: expected " + std::to_string(in_) + " input channels, got "
                               + std::to_string(x.c()));
        }
        ConvGeometry g{in_, x.h(), x.w(), k_, stride_, pad_};
        if (x.h() + 2 * pad_ < k_ || x.w() + 2 * pad_ < k_) {
            throw InvalidInput("Conv2d: input smaller than kernel");
        }
        return g;
    }

    int in_, out_, k_, stride_, pad_;
    bool has_bias_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
};

/// Transposed convolution; weight layout (in, out, k, k).
class ConvTranspose2d final : public Module {
public:
    ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0, bool bias = true)
        : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
          weight_(Tensor(in_channels, out_channels, kernel, kernel)),
          bias_(Tensor(1, bias ? out_channels : 0, 1, 1))
    {
        if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || pad < 0) {
            throw InvalidInput("ConvTranspose2d: invalid geometry");
        }
    }

    [[nodiscard]] int in_channels() const { return in_; }
    [[nodiscard]] int out_channels() const { return out_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        const ConvGeometry g = geometry(x);
        Tensor y(x.n(), out_, g.height, g.width);
        const int positions = x.h() * x.w();
        const int rows = out_ * k_ * k_;
        std::vector<float> cols(static_cast<std::size_t>(rows) * positions);
        ConstMapF w(weight_.value.data(), in_, rows);
        for (int n = 0; n < x.n(); ++n) {
            ConstMapF xin(x.sample(n), in_, positions);
            MapF c(cols.data(), rows, positions);
            c.noalias() = w.transpose() * xin;
            col2im(cols.data(), g, y.sample(n));
            if (has_bias_) {
                const int plane = g.height * g.width;
                for (int o = 0; o < out_; ++o) {
                    float* p = y.sample(n) + static_cast<std::size_t>(o) * plane;
                    for (int i = 0; i < plane; ++i) {
                        p[i] += bias_.value[o];
                    }
                }
            }
        }
        return y;
    }

    Tensor forward(const Tensor& x) override
    {
        input_ = x;
        return infer(x);
    }

    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        const ConvGeometry g = geometry(input_);
        const int positions = input_.h() * input_.w();
        const int rows = out_ * k_ * k_;
        Tensor dx;
        if (need_input_grad) {
            dx = Tensor(input_.shape());
        }
        std::vector<float> gcols(static_cast<std::size_t>(rows) * positions);
        ConstMapF w(weight_.value.data(), in_, rows);
        MapF dw(weight_.grad.data(), in_, rows);
        const int plane = g.height * g.width;
        for (int n = 0; n < input_.n(); ++n) {
            im2col(grad_out.sample(n), g, gcols.data());
            ConstMapF gc(gcols.data(), rows, positions);
            if (trainable()) {
                ConstMapF xin(input_.sample(n), in_, positions);
                dw.noalias() += xin * gc.transpose();
                if (has_bias_) {
                    for (int o = 0; o < out_; ++o) {
                        const float* p = grad_out.sample(n) + static_cast<std::size_t>(o) * plane;
                        float s = 0.0f;
                        for (int i = 0; i < plane; ++i) {
                            s += p[i];
                        }
                        bias_.grad[o] += s;
                    }
                }
            }
            if (need_input_grad) {
                MapF d(dx.sample(n), in_, positions);
                d.noalias() = w * gc;
            }
        }
        return dx;
    }

    std::vector<Parameter*> parameters() override
    {
        if (has_bias_) {
            return {&weight_, &bias_};
        }
        return {&weight_};
    }
    [[nodiscard]] std::vector<const Parameter*> parameters() const override
    {
        if (has_bias_) {
            return {&weight_, &bias_};
        }
        return {&weight_};
    }
    [[nodiscard]] std::unique_ptr<Module> clone() const override
    {
        return std::make_unique<ConvTranspose2d>(*this);
    }
    [[nodiscard]] std::string_view kind() const override { return "conv_transpose2d"; }

private:
    // Geometry of the equivalent forward convolution whose output is our input.
    [[nodiscard]] ConvGeometry geometry(const Tensor& x) const
    {
        if (x.c() != in_) {
            throw InvalidInput("ConvTranspose2d: expected " + std::to_string(in_) + " input channels, got "
                               + std::to_string(x.c()));
        }
        const int ho = (x.h() - 1) * stride_ - 2 * pad_ + k_;
        const int wo = (x.w() - 1) * stride_ - 2 * pad_ + k_;
        if (ho <= 0 || wo <= 0) {
            throw InvalidInput("ConvTranspose2d: empty output");
        }
        return ConvGeometry{out_, ho, wo, k_, stride_, pad_};
    }

    int in_, out_, k_, stride_, pad_;
    bool has_bias_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
};

/// Fully connected layer over the flattened sample; weight layout (out, in).
class Linear final : public Module {
public:
    Linear(int in_features, int out_features)
        : in_(in_features), out_(out_features), weight_(Tensor(out_features, in_features, 1, 1)),
          bias_(Tensor(1, out_features, 1, 1))
    {
        if (in_features <= 0 || out_features <= 0) {
            throw InvalidInput("Linear: invalid size");
        }
    }

    [[nodiscard]] int in_features() const { return in_; }
    [[nodiscard]] int out_features() const { return out_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        check(x);
        Tensor y(x.n(), out_, 1, 1);
        ConstMapF xin(x.data(), x.n(), in_);
        ConstMapF w(weight_.value.data(), out_, in_);
        MapF out(y.data(), x.n(), out_);
        out.noalias() = xin * w.transpose();
        for (int i = 0; i < x.n(); ++i) {
            for (int o = 0; o < out_; ++o) {
                out(i, o) += bias_.value[o];
            }
        }
        return y;
    }

    Tensor forward(const Tensor& x) override
    {
        input_ = x;
        return infer(x);
    }

    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        ConstMapF go(grad_out.data(), input_.n(), out_);
        if (trainable()) {
            ConstMapF xin(input_.data(), input_.n(), in_);
            MapF dw(weight_.grad.data(), out_, in_);
            dw.noalias() += go.transpose() * xin;
            for (int o = 0; o < out_; ++o) {
                bias_.grad[o] += plain_sum(grad_out.data() + o, input_.n(), out_);
            }
        }
        Tensor dx;
        if (need_input_grad) {
            dx = Tensor(input_.shape());
            ConstMapF w(weight_.value.data(), out_, in_);
            MapF d(dx.data(), input_.n(), in_);
            d.noalias() = go * w;
        }
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
    [[nodiscard]] std::vector<const Parameter*> parameters() const override { return {&weight_, &bias_}; }
    [[nodiscard]] std::unique_ptr<Module> clone() const override { return std::make_unique<Linear>(*this); }
    [[nodiscard]] std::string_view kind() const override { return "linear"; }

private:
    void check(const Tensor& x) const
    {
        if (static_cast<int>(x.sample_size()) != in_) {
            throw InvalidInput("Linear: expected " + std::to_string(in_) + " features, got "
                               + std::to_string(x.sample_size()));
        }
    }

    int in_, out_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
};

/// Per-channel batch normalisation. Training uses batch statistics, `infer` the running ones.
class BatchNorm2d final : public Module {
public:
    explicit BatchNorm2d(int channels, float momentum = 0.1f, float eps = 1e-5f)
        : channels_(channels), momentum_(momentum), eps_(eps), gamma_(Tensor(1, channels, 1, 1, 1.0f)),
          beta_(Tensor(1, channels, 1, 1)), running_mean_(1, channels, 1, 1), running_var_(1, channels, 1, 1, 1.0f)
    {
    }

    Parameter& gamma() { return gamma_; }
    Parameter& beta() { return beta_; }

    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        check(x);
        Tensor y(x.shape());
        const int plane = x.h() * x.w();
        for (int n = 0; n < x.n(); ++n) {
            for (int c = 0; c < channels_; ++c) {
                const float scale = gamma_.value[c] / std::sqrt(running_var_[c] + eps_);
                const float shift = beta_.value[c] - running_mean_[c] * scale;
                const float* src = x.sample(n) + static_cast<std::size_t>(c) * plane;
                float* dst = y.sample(n) + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    dst[i] = src[i] * scale + shift;
                }
            }
        }
        return y;
    }

    Tensor forward(const Tensor& x) override
    {
        check(x);
        const int plane = x.h() * x.w();
        const double count = static_cast<double>(x.n()) * plane;
        xhat_ = Tensor(x.shape());
        inv_std_.assign(channels_, 0.0f);
        Tensor y(x.shape());
        for (int c = 0; c < channels_; ++c) {
            double sum = 0.0;
            for (int n = 0; n < x.n(); ++n) {
                const float* src = x.sample(n) + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    sum += src[i];
                }
            }
            const double mean = sum / count;
            double sq = 0.0;
            for (int n = 0; n < x.n(); ++n) {
                const float* src = x.sample(n) + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    const double d = src[i] - mean;
                    sq += d * d;
                }
            }
            const double var = sq / count;
            const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
            inv_std_[c] = inv_std;
            for (int n = 0; n < x.n(); ++n) {
                const float* src = x.sample(n) + static_cast<std::size_t>(c) * plane;
                float* xh = xhat_.sample(n) + static_cast<std::size_t>(c) * plane;
                float* dst = y.sample(n) + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    xh[i] = static_cast<float>((src[i] - mean) * inv_std);
                    dst[i] = gamma_.value[c] * xh[i] + beta_.value[c];
                }
            }
            const double unbiased = count > 1 ? sq / (count - 1) : var;
            running_mean_[c] = static_cast<float>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
            running_var_[c] = static_cast<float>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
        }
        return y;
    }

    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        const int plane = xhat_.h() * xhat_.w();
        const double count = static_cast<double>(xhat_.n()) * plane;
        Tensor dx;
        if (need_input_grad) {
            dx = Tensor(xhat_.shape());
        }
        for (int c = 0; c < channels_; ++c) {
            double sum_g = 0.0;
            double sum_gx = 0.0;
            for (int n = 0; n < xhat_.n(); ++n) {
                const float* g = grad_out.sample(n) + static_cast<std::size_t>(c) * plane;
                const float* xh = xhat_.sample(n) + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    sum_g += g[i];
                    sum_gx += static_cast<double>(g[i]) * xh[i];
                }
            }
            if (trainable()) {
                gamma_.grad[c] += static_cast<float>(sum_gx);
                beta_.grad[c] += static_cast<float>(sum_g);
            }
            if (need_input_grad) {
                const double k = gamma_.value[c] * inv_std_[c] / count;
                for (int n = 0; n < xhat_.n(); ++n) {
                    const float* g = grad_out.sample(n) + static_cast<std::size_t>(c) * plane;
                    const float* xh = xhat_.sample(n) + static_cast<std::size_t>(c) * plane;
                    float* d = dx.sample(n) + static_cast<std::size_t>(c) * plane;
                    for (int i = 0; i < plane; ++i) {
                        d[i] = static_cast<float>(k * (count * g[i] - sum_g - xh[i] * sum_gx));
                    }
                }
            }
        }
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
    [[nodiscard]] std::vector<const Parameter*> parameters() const override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
    [[nodiscard]] std::vector<const Tensor*> buffers() const override { return {&running_mean_, &running_var_}; }
    [[nodiscard]] std::unique_ptr<Module> clone() const override { return std::make_unique<BatchNorm2d>(*this); }
    [[nodiscard]] std::string_view kind() const override { return "batchnorm2d"; }

private:
    void check(const Tensor& x) const
    {
        if (x.c() != channels_) {
            throw InvalidInput("BatchNorm2d: channel mismatch");
        }
    }

    int channels_;
    float momentum_;
    float eps_;
    Parameter gamma_;
    Parameter beta_;
    Tensor running_mean_;
    Tensor running_var_;
    Tensor xhat_;
    std::vector<float> inv_std_;
};

enum class Activation { Identity, ReLU, LeakyReLU, Tanh, Sigmoid };

inline std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::Identity:
        return "identity";
    case Activation::ReLU:
        return "relu";
    case Activation::LeakyReLU:
        return "leaky_relu";
    case Activation::Tanh:
        return "tanh";
    case Activation::Sigmoid:
        return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_string(std::string_view s)
{
    for (Activation a : {Activation::Identity, Activation::ReLU, Activation::LeakyReLU, Activation::Tanh,
                         Activation::Sigmoid}) {
        if (to_string(a) == s) {
            return a;
        }
    }
    throw InvalidInput("unknown activation '" + std::string(s) + "'");
}

/// Elementwise activation. Leaky slope is 0.2.
class Act final : public Module {
public:
    explicit Act(Activation a) : act_(a) {}

    [[nodiscard]] Activation activation() const { return act_; }

    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        Tensor y = x;
        for (float& v : y.vec()) {
            v = apply(v);
        }
        return y;
    }

    Tensor forward(const Tensor& x) override
    {
        Tensor y = infer(x);
        // tanh and sigmoid differentiate from their output, the rest from the input
        cache_ = (act_ == Activation::Tanh || act_ == Activation::Sigmoid) ? y : x;
        return y;
    }

    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        if (!need_input_grad) {
            return {};
        }
        Tensor dx = grad_out;
        auto& d = dx.vec();
        const auto& c = cache_.vec();
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] *= derivative(c[i]);
        }
        return dx;
    }

    [[nodiscard]] std::unique_ptr<Module> clone() const override { return std::make_unique<Act>(*this); }
    [[nodiscard]] std::string_view kind() const override { return to_string(act_); }

private:
    [[nodiscard]] float apply(float v) const
    {
        switch (act_) {
        case Activation::Identity:
            return v;
        case Activation::ReLU:
            return v > 0.0f ? v : 0.0f;
        case Activation::LeakyReLU:
            return v > 0.0f ? v : 0.2f * v;
        case Activation::Tanh:
            return std::tanh(v);
        case Activation::Sigmoid:
            return 1.0f / (1.0f + std::exp(-v));
        }
        return v;
    }

    [[nodiscard]] float derivative(float cached) const
    {
        switch (act_) {
        case Activation::Identity:
            return 1.0f;
        case Activation::ReLU:
            return cached > 0.0f ? 1.0f : 0.0f;
        case Activation::LeakyReLU:
            return cached > 0.0f ? 1.0f : 0.2f;
        case Activation::Tanh:
            return 1.0f - cached * cached;
        case Activation::Sigmoid:
            return cached * (1.0f - cached);
        }
        return 1.0f;
    }

    Activation act_;
    Tensor cache_;
};

/// (N,C,H,W) -> (N,C,1,1) spatial mean.
class GlobalAvgPool final : public Module {
public:
    [[nodiscard]] Tensor infer(const Tensor& x) const override
    {
        Tensor y(x.n(), x.c(), 1, 1);
        const int plane = x.h() * x.w();
        for (int n = 0; n < x.n(); ++n) {
            for (int c = 0; c < x.c(); ++c) {
                const float* p = x.sample(n) + static_cast<std::size_t>(c) * plane;
                double s = 0.0;
                for (int i = 0; i < plane; ++i) {
                    s += p[i];
                }
                y.at(n, c, 0, 0) = static_cast<float>(s / plane);
            }
        }
        return y;
    }

    Tensor forward(const Tensor& x) override
    {
        in_shape_ = x.shape();
        return infer(x);
    }

    Tensor backward(const Tensor& grad_out, bool need_input_grad) override
    {
        if (!need_input_grad) {
            return {};
        }
        Tensor dx(in_shape_);
        const int plane = in_shape_.h * in_shape_.w;
        const float inv = 1.0f / static_cast<float>(plane);
        for (int n = 0; n < in_shape_.n; ++n) {
            for (int c = 0; c < in_shape_.c; ++c) {
                float* p = dx.sample(n) + static_cast<std::size_t>(c) * plane;
                std::fill_n(p, plane, grad_out.at(n, c, 0, 0) * inv);
            }
        }
        return dx;
    }

    [[nodiscard]] std::unique_ptr<Module> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
    [[nodiscard]] std::string_view kind() const override { return "global_avg_pool"; }

private:
    Shape in_shape_{};
};

} // namespace simgan::nn
