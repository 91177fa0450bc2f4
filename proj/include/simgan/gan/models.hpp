#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/random.hpp"
#include "simgan/nn/layers.hpp"
#include "simgan/nn/optim.hpp"
#include "simgan/nn/sequential.hpp"

namespace simgan::gan {

struct GanConfig {
    int epochs = 200;
    int batch_size = 128;
    double lr = 2e-4;
    double beta1 = 0.5;
    double clip_value = 0.1;
    double reward_weight = 0.3;
    double real_label = 0.9;
    std::uint64_t seed = 0;
    int latent_dim = 100;
    int feature_maps = 64;
    int image_size = 64; ///< 64 (full) or 32 (desk)
    int checkpoint_every = 0; ///< epochs between checkpoints; 0 = only the final one
    bool resize_for_scorer = false; ///< bilinear-resize score inputs to the scorer's resolution

    /// CPU-sized profile: 32x32 images, 32 feature maps, batch 64, 30 epochs.
    static GanConfig desk()
    {
        GanConfig c;
        c.epochs = 30;
        c.batch_size = 64;
        c.feature_maps = 32;
        c.image_size = 32;
        c.resize_for_scorer = true;
        return c;
    }

    void validate() const
    {
        if (reward_weight < 0) {
            throw ConfigError("gan.reward_weight must be >= 0");
        }
        if (!(clip_value > 0)) {
            throw ConfigError("gan.clip_value must be > 0");
        }
        if (image_size != 32 && image_size != 64) {
            throw ConfigError("gan.image_size must be 32 or 64");
        }
        if (epochs < 0 || batch_size < 2 || latent_dim <= 0 || feature_maps <= 0 || !(lr > 0)) {
            throw ConfigError("gan: epochs >= 0, batch_size >= 2, latent_dim/feature_maps/lr > 0 required");
        }
        if (real_label <= 0 || real_label > 1) {
            throw ConfigError("gan.real_label must be in (0, 1]");
        }
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"epochs", epochs},
                {"batch_size", batch_size},
                {"lr", lr},
                {"beta1", beta1},
                {"clip_value", clip_value},
                {"reward_weight", reward_weight},
                {"real_label", real_label},
                {"seed", seed},
                {"latent_dim", latent_dim},
                {"feature_maps", feature_maps},
                {"image_size", image_size},
                {"checkpoint_every", checkpoint_every},
                {"resize_for_scorer", resize_for_scorer}};
    }

    static GanConfig from_json(const nlohmann::json& j) { return from_json(j, GanConfig{}); }

    /// Fields absent from `j` keep their value in `c`.
    static GanConfig from_json(const nlohmann::json& j, GanConfig c)
    {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.beta1 = j.value("beta1", c.beta1);
        c.clip_value = j.value("clip_value", c.clip_value);
        c.reward_weight = j.value("reward_weight", c.reward_weight);
        c.real_label = j.value("real_label", c.real_label);
        c.seed = j.value("seed", c.seed);
        c.latent_dim = j.value("latent_dim", c.latent_dim);
        c.feature_maps = j.value("feature_maps", c.feature_maps);
        c.image_size = j.value("image_size", c.image_size);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.resize_for_scorer = j.value("resize_for_scorer", c.resize_for_scorer);
        return c;
    }
};

/// DCGAN generator: z (latent,1,1) -> image (3,S,S) in [-1,1].
struct Generator {
    int latent_dim = 100;
    int feature_maps = 64;
    int image_size = 64;
    nn::Sequential net;

    Generator() = default;
    Generator(int latent, int fm, int size) : latent_dim(latent), feature_maps(fm), image_size(size)
    {
        using nn::Activation;
        const int blocks = size == 64 ? 3 : 2; // stride-2 upsampling blocks after the 4x4 projection
        int ch = fm << blocks;
        net.add<nn::ConvTranspose2d>(latent, ch, 4, 1, 0, false);
        net.add<nn::BatchNorm2d>(ch);
        net.add<nn::Act>(Activation::ReLU);
        for (int b = 0; b < blocks; ++b) {
            net.add<nn::ConvTranspose2d>(ch, ch / 2, 4, 2, 1, false);
            net.add<nn::BatchNorm2d>(ch / 2);
            net.add<nn::Act>(Activation::ReLU);
            ch /= 2;
        }
        net.add<nn::ConvTranspose2d>(ch, 3, 4, 2, 1, false);
        net.add<nn::Act>(Activation::Tanh);
    }
    explicit Generator(const GanConfig& c) : Generator(c.latent_dim, c.feature_maps, c.image_size) {}
};

/// DCGAN discriminator: image (3,S,S) in [-1,1] -> probability (1,1,1).
struct Discriminator {
    int feature_maps = 64;
    int image_size = 64;
    nn::Sequential net;

    Discriminator() = default;
    Discriminator(int fm, int size) : feature_maps(fm), image_size(size)
    {
        using nn::Activation;
        const int blocks = size == 64 ? 3 : 2;
        int ch = fm;
        net.add<nn::Conv2d>(3, ch, 4, 2, 1, false);
        net.add<nn::Act>(Activation::LeakyReLU);
        for (int b = 0; b < blocks; ++b) {
            net.add<nn::Conv2d>(ch, ch * 2, 4, 2, 1, false);
            net.add<nn::BatchNorm2d>(ch * 2);
            net.add<nn::Act>(Activation::LeakyReLU);
            ch *= 2;
        }
        net.add<nn::Conv2d>(ch, 1, 4, 1, 0, false);
        net.add<nn::Act>(Activation::Sigmoid);
    }
    explicit Discriminator(const GanConfig& c) : Discriminator(c.feature_maps, c.image_size) {}
};

/// Conv weights ~ N(mean, std); batch-norm scale ~ N(1, std), shift 0.
inline void init_weights(nn::Sequential& net, std::uint64_t seed, double mean = 0.0, double std = 0.02)
{
    Rng rng = make_rng(seed, "gan-init");
    for (std::size_t i = 0; i < net.size(); ++i) {
        nn::Module& m = net[i];
        if (auto* c = dynamic_cast<nn::Conv2d*>(&m)) {
            nn::fill_normal(c->weight().value, rng, mean, std);
        } else if (auto* t = dynamic_cast<nn::ConvTranspose2d*>(&m)) {
            nn::fill_normal(t->weight().value, rng, mean, std);
        } else if (auto* bn = dynamic_cast<nn::BatchNorm2d*>(&m)) {
            auto params = bn->parameters();
            nn::fill_normal(params[0]->value, rng, 1.0, std);
            params[1]->value.fill(0.0f);
        }
    }
}

inline Tensor latent_batch(int n, int latent_dim, Rng& rng)
{
    Tensor z(n, latent_dim, 1, 1);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (float& v : z.vec()) {
        v = dist(rng);
    }
    return z;
}

/// n generated images in [0,1] (inference mode: batch-norm running statistics).
inline std::vector<Image> sample(const Generator& gen, int n, std::uint64_t seed, int chunk = 64)
{
    if (n < 1) {
        throw InvalidInput("sample: n must be >= 1");
    }
    Rng rng = make_rng(seed, "gan-sample");
    const Tensor z = latent_batch(n, gen.latent_dim, rng);
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int start = 0; start < n; start += chunk) {
        const int count = std::min(chunk, n - start);
        const Tensor y = gen.net.infer(z.slice(start, count));
        for (int i = 0; i < count; ++i) {
            out.push_back(from_batch(y, i, -1.0f, 1.0f));
        }
    }
    return out;
}

} // namespace simgan::gan
