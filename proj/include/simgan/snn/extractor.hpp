#pragma once

#include <Eigen/Core>

#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/random.hpp"
#include "simgan/nn/archive.hpp"
#include "simgan/nn/layers.hpp"
#include "simgan/nn/optim.hpp"
#include "simgan/nn/sequential.hpp"

namespace simgan::snn {

enum class LayerKind { Conv, ConvTranspose };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int in = 0;
    int out = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    nn::Activation act = nn::Activation::ReLU;
};

/// Encoder layers map the image to a bottleneck feature map whose spatial mean
/// is the embedding; decoder layers map the bottleneck back to an image.
struct ExtractorConfig {
    std::string name = "desk";
    std::vector<LayerSpec> encoder;
    std::vector<LayerSpec> decoder;

    [[nodiscard]] int embedding_dim() const { return encoder.empty() ? 0 : encoder.back().out; }

    /// Desk-scale backbone: ten 3x3/1x1 convolutions (three stride-2), a
    /// 1x1 linear bottleneck, and a two-layer transposed-conv decoder.
    static ExtractorConfig desk(int embedding_dim = 128)
    {
        using nn::Activation;
        ExtractorConfig c;
        c.name = "desk";
        auto conv = [](int in, int out, int stride) {
            return LayerSpec{LayerKind::Conv, in, out, 3, stride, 1, Activation::ReLU};
        };
        c.encoder = {conv(3, 16, 1),  conv(16, 16, 2), conv(16, 32, 1), conv(32, 32, 2),  conv(32, 64, 1),
                     conv(64, 64, 2), conv(64, 64, 1), conv(64, 128, 1), conv(128, 128, 1),
                     LayerSpec{LayerKind::Conv, 128, embedding_dim, 1, 1, 0, Activation::Identity}};
        c.decoder = {LayerSpec{LayerKind::ConvTranspose, embedding_dim, 32, 4, 4, 0, Activation::ReLU},
                     LayerSpec{LayerKind::ConvTranspose, 32, 3, 4, 2, 1, Activation::Sigmoid}};
        return c;
    }

    /// VGG-16-shaped autoencoder (13 conv layers, stride-2 at block ends) for full-scale runs.
    static ExtractorConfig vgg16(int embedding_dim = 512)
    {
        using nn::Activation;
        ExtractorConfig c;
        c.name = "vgg16";
        const int widths[5] = {64, 128, 256, 512, 512};
        const int depth[5] = {2, 2, 3, 3, 3};
        int in = 3;
        for (int b = 0; b < 5; ++b) {
            for (int i = 0; i < depth[b]; ++i) {
                const bool last = i == depth[b] - 1;
                const int out = (b == 4 && last) ? embedding_dim : widths[b];
                c.encoder.push_back(LayerSpec{LayerKind::Conv, in, out, 3, last ? 2 : 1, 1,
                                              (b == 4 && last) ? Activation::Identity : Activation::ReLU});
                in = out;
            }
        }
        const int dec[5] = {512, 256, 128, 64, 3};
        for (int b = 0; b < 5; ++b) {
            c.decoder.push_back(LayerSpec{LayerKind::ConvTranspose, in, dec[b], 4, 2, 1,
                                          b == 4 ? Activation::Sigmoid : Activation::ReLU});
            in = dec[b];
        }
        return c;
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        auto layers = [](const std::vector<LayerSpec>& v) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& l : v) {
                arr.push_back({{"kind", l.kind == LayerKind::Conv ? "conv" : "conv_transpose"},
                               {"in", l.in},
                               {"out", l.out},
                               {"kernel", l.kernel},
                               {"stride", l.stride},
                               {"pad", l.pad},
                               {"activation", std::string(nn::to_string(l.act))}});
            }
            return arr;
        };
        return {{"name", name}, {"encoder", layers(encoder)}, {"decoder", layers(decoder)}};
    }

    static ExtractorConfig from_json(const nlohmann::json& j)
    {
        auto layers = [](const nlohmann::json& arr) {
            std::vector<LayerSpec> v;
            for (const auto& l : arr) {
                v.push_back(LayerSpec{l.at("kind").get<std::string>() == "conv" ? LayerKind::Conv
                                                                                 : LayerKind::ConvTranspose,
                                      l.at("in").get<int>(), l.at("out").get<int>(), l.at("kernel").get<int>(),
                                      l.at("stride").get<int>(), l.at("pad").get<int>(),
                                      nn::activation_from_string(l.at("activation").get<std::string>())});
            }
            return v;
        };
        ExtractorConfig c;
        c.name = j.at("name").get<std::string>();
        c.encoder = layers(j.at("encoder"));
        c.decoder = layers(j.at("decoder"));
        return c;
    }
};

/// Encoder-decoder network whose parameterised layers are individually
/// addressable (index 0 = first encoder layer, forward order through the
/// decoder) for freeze scheduling. Copying deep-copies all parameters.
class LayeredExtractor {
public:
    LayeredExtractor() = default;

    explicit LayeredExtractor(ExtractorConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg))
    {
        if (cfg_.encoder.empty()) {
            throw InvalidInput("LayeredExtractor: encoder needs at least one layer");
        }
        Rng rng = make_rng(seed, "extractor-init");
        auto build = [&](const LayerSpec& s) {
            nn::Sequential block;
            if (s.kind == LayerKind::Conv) {
                auto& conv = block.add<nn::Conv2d>(s.in, s.out, s.kernel, s.stride, s.pad);
                nn::fill_normal(conv.weight().value, rng, 0.0, std::sqrt(2.0 / (s.in * s.kernel * s.kernel)));
            } else {
                auto& deconv = block.add<nn::ConvTranspose2d>(s.in, s.out, s.kernel, s.stride, s.pad);
                const double fan = static_cast<double>(s.in) * s.kernel * s.kernel
                                   / (static_cast<double>(s.stride) * s.stride);
                nn::fill_normal(deconv.weight().value, rng, 0.0, std::sqrt(2.0 / fan));
            }
            block.add<nn::Act>(s.act);
            return block;
        };
        int channels = 3;
        for (const auto& s : cfg_.encoder) {
            if (s.kind != LayerKind::Conv || s.in != channels) {
                throw InvalidInput("LayeredExtractor: encoder must be a chain of convolutions");
            }
            channels = s.out;
            layers_.push_back(build(s));
        }
        for (const auto& s : cfg_.decoder) {
            if (s.in != channels) {
                throw InvalidInput("LayeredExtractor: decoder channel chain broken");
            }
            channels = s.out;
            layers_.push_back(build(s));
        }
        if (!cfg_.decoder.empty() && channels != 3) {
            throw InvalidInput("LayeredExtractor: decoder must end with 3 channels");
        }
        trainable_.assign(layers_.size(), true);
        apply_flags();
    }

    [[nodiscard]] const ExtractorConfig& config() const { return cfg_; }
    [[nodiscard]] int layer_count() const { return static_cast<int>(layers_.size()); }
    [[nodiscard]] int encoder_count() const { return static_cast<int>(cfg_.encoder.size()); }
    [[nodiscard]] int embedding_dim() const { return cfg_.embedding_dim(); }
    [[nodiscard]] bool is_encoder_layer(int i) const { return i >= 0 && i < encoder_count(); }

    nn::Sequential& layer(int i) { return layers_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const nn::Sequential& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
    /// The parameterised module (conv or transposed conv) of layer i.
    nn::Module& core(int i) { return layer(i)[0]; }

    [[nodiscard]] bool trainable(int i) const { return trainable_.at(static_cast<std::size_t>(i)); }

    /// Only flips flags; parameter values are never touched.
    void set_trainable(const std::set<int>& indices)
    {
        for (int i : indices) {
            if (i < 0 || i >= layer_count()) {
                throw InvalidInput("trainable index " + std::to_string(i) + " out of range");
            }
        }
        for (int i = 0; i < layer_count(); ++i) {
            trainable_[static_cast<std::size_t>(i)] = indices.count(i) != 0;
        }
        apply_flags();
    }
    void set_all_trainable(bool on)
    {
        trainable_.assign(layers_.size(), on);
        apply_flags();
    }

    [[nodiscard]] std::set<int> trainable_indices() const
    {
        std::set<int> s;
        for (int i = 0; i < layer_count(); ++i) {
            if (trainable(i)) {
                s.insert(i);
            }
        }
        return s;
    }

    /// The last `n` layers in forward order (clamped to the layer count).
    [[nodiscard]] std::set<int> last_layers(int n) const
    {
        std::set<int> s;
        for (int i = std::max(0, layer_count() - n); i < layer_count(); ++i) {
            s.insert(i);
        }
        return s;
    }

    /// Product of encoder strides; input sides must be multiples of it.
    [[nodiscard]] int downsample_factor() const
    {
        int f = 1;
        for (const auto& s : cfg_.encoder) {
            f *= s.stride;
        }
        return f;
    }

    [[nodiscard]] bool accepts(int height, int width) const
    {
        const int f = downsample_factor();
        return height >= f && width >= f && height % f == 0 && width % f == 0;
    }

    void check_input(int height, int width) const
    {
        if (!accepts(height, width)) {
            throw InvalidInput("extractor '" + cfg_.name + "' cannot take " + std::to_string(height) + "x"
                               + std::to_string(width) + " input (sides must be multiples of "
                               + std::to_string(downsample_factor()) + ")");
        }
    }

    // ---- inference (const, thread-safe) ----

    /// Output of layer `upto` (inclusive) for a batch.
    [[nodiscard]] Tensor activations(const Tensor& batch, int upto) const
    {
        check_input(batch.h(), batch.w());
        Tensor h = batch;
        for (int i = 0; i <= upto; ++i) {
            h = layer(i).infer(h);
        }
        return h;
    }

    [[nodiscard]] Tensor features(const Tensor& batch) const { return activations(batch, encoder_count() - 1); }

    /// One embedding per row.
    [[nodiscard]] Eigen::MatrixXd embed(const Tensor& batch) const { return pool(features(batch)); }

    [[nodiscard]] Eigen::VectorXd embed(const Image& img) const
    {
        Tensor t = to_batch(std::span<const Image>(&img, 1));
        return embed(t).row(0).transpose();
    }

    [[nodiscard]] Eigen::MatrixXd embed(std::span<const Image> images, int chunk = 64) const
    {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), embedding_dim());
        for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(chunk)) {
            const std::size_t count = std::min(images.size() - start, static_cast<std::size_t>(chunk));
            Eigen::MatrixXd e = embed(to_batch(images.subspan(start, count)));
            out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) = e;
        }
        return out;
    }

    [[nodiscard]] Tensor reconstruct(const Tensor& batch) const
    {
        if (cfg_.decoder.empty()) {
            throw ConfigError("extractor '" + cfg_.name + "' has no decoder");
        }
        return activations(batch, layer_count() - 1);
    }

    static Eigen::MatrixXd pool(const Tensor& feat)
    {
        Eigen::MatrixXd e(feat.n(), feat.c());
        const int plane = feat.h() * feat.w();
        for (int n = 0; n < feat.n(); ++n) {
            for (int c = 0; c < feat.c(); ++c) {
                const float* p = feat.sample(n) + static_cast<std::size_t>(c) * plane;
                double s = 0.0;
                for (int i = 0; i < plane; ++i) {
                    s += p[i];
                }
                e(n, c) = s / plane;
            }
        }
        return e;
    }

    // ---- training path (mutates caches) ----

    Tensor train_encode(const Tensor& batch)
    {
        check_input(batch.h(), batch.w());
        Tensor h = batch;
        for (int i = 0; i < encoder_count(); ++i) {
            h = layer(i).forward(h);
        }
        return h;
    }

    Tensor train_decode(const Tensor& feat)
    {
        Tensor h = feat;
        for (int i = encoder_count(); i < layer_count(); ++i) {
            h = layer(i).forward(h);
        }
        return h;
    }

    /// Backpropagates a bottleneck gradient into encoder parameter gradients.
    void backward_encoder(const Tensor& grad_features)
    {
        backward_range(0, encoder_count(), grad_features, false);
    }

    /// Backpropagates an image-space gradient through the decoder; returns the
    /// bottleneck gradient (empty when the encoder is fully frozen).
    Tensor backward_decoder(const Tensor& grad_image)
    {
        const bool encoder_needs = lowest_trainable(0, encoder_count()) < encoder_count();
        return backward_range(encoder_count(), layer_count(), grad_image, encoder_needs);
    }

    /// Backward through [begin, end); used by Grad-CAM for the gradient at a layer output.
    Tensor backward_range(int begin, int end, const Tensor& grad_out, bool need_input_grad)
    {
        const int stop = need_input_grad ? begin : lowest_trainable(begin, end);
        if (stop >= end) {
            return {};
        }
        Tensor g = grad_out;
        for (int i = end - 1; i >= stop; --i) {
            g = layer(i).backward(g, need_input_grad || i > stop);
        }
        return need_input_grad ? g : Tensor{};
    }

    std::vector<nn::Parameter*> trainable_parameters()
    {
        std::vector<nn::Parameter*> out;
        for (int i = 0; i < layer_count(); ++i) {
            if (trainable(i)) {
                auto p = layer(i).parameters();
                out.insert(out.end(), p.begin(), p.end());
            }
        }
        return out;
    }

    void zero_grad()
    {
        for (auto& l : layers_) {
            l.zero_grad();
        }
    }

    // ---- digests and persistence ----

    [[nodiscard]] std::string digest(const std::set<int>& indices) const
    {
        std::vector<const Tensor*> tensors;
        for (int i : indices) {
            auto t = nn::state_tensors(layer(i));
            tensors.insert(tensors.end(), t.begin(), t.end());
        }
        return nn::digest_tensors(tensors);
    }

    [[nodiscard]] std::string digest() const
    {
        std::set<int> all;
        for (int i = 0; i < layer_count(); ++i) {
            all.insert(i);
        }
        return digest(all);
    }

    [[nodiscard]] std::string frozen_digest() const
    {
        std::set<int> frozen;
        for (int i = 0; i < layer_count(); ++i) {
            if (!trainable(i)) {
                frozen.insert(i);
            }
        }
        return digest(frozen);
    }

    void save_into(nn::TensorArchive& ar, const std::string& prefix = "layer") const
    {
        for (int i = 0; i < layer_count(); ++i) {
            ar.put_module(prefix + std::to_string(i), layer(i));
        }
    }

    void load_from(const nn::TensorArchive& ar, const std::string& prefix = "layer")
    {
        for (int i = 0; i < layer_count(); ++i) {
            ar.load_module(prefix + std::to_string(i), layer(i));
        }
    }

private:
    [[nodiscard]] int lowest_trainable(int begin, int end) const
    {
        for (int i = begin; i < end; ++i) {
            if (trainable(i)) {
                return i;
            }
        }
        return end;
    }

    void apply_flags()
    {
        for (int i = 0; i < layer_count(); ++i) {
            layers_[static_cast<std::size_t>(i)].set_all_trainable(trainable(i));
        }
    }

    ExtractorConfig cfg_;
    std::vector<nn::Sequential> layers_;
    std::vector<bool> trainable_;
};

} // namespace simgan::snn
