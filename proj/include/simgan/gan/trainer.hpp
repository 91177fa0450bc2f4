#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "simgan/core/digest.hpp"
#include "simgan/core/error.hpp"
#include "simgan/gan/losses.hpp"
#include "simgan/gan/models.hpp"
#include "simgan/gan/trace.hpp"
#include "simgan/nn/archive.hpp"
#include "simgan/nn/optim.hpp"
#include "simgan/snn/extractor.hpp"
#include "simgan/snn/score.hpp"

namespace simgan::gan {

namespace fs = std::filesystem;

/// A trained similarity network and the square resolution it was fine-tuned on.
struct Scorer {
    const snn::LayeredExtractor* extractor = nullptr;
    int input_size = 64;
};

struct TrainResult {
    Generator gen;
    Discriminator disc;
    RewardTrace trace;
    std::vector<fs::path> checkpoints;
};

/// Fresh generator/discriminator pair initialised from cfg.seed.
inline std::pair<Generator, Discriminator> make_models(const GanConfig& cfg)
{
    cfg.validate();
    Generator g(cfg);
    Discriminator d(cfg);
    init_weights(g.net, derive_seed(cfg.seed, "gen"));
    init_weights(d.net, derive_seed(cfg.seed, "disc"));
    return {std::move(g), std::move(d)};
}

inline void save_gan_checkpoint(const fs::path& stem, const Generator& g, const Discriminator& d,
                                const GanConfig& cfg, int epoch)
{
    nn::TensorArchive ar;
    ar.put_module("gen", g.net);
    ar.put_module("disc", d.net);
    fs::path bin = stem;
    bin += ".bin";
    ar.save(bin);
    nlohmann::json j = {{"config", cfg.to_json()},
                        {"seed", cfg.seed},
                        {"epoch", epoch},
                        {"gen_digest", nn::digest_module(g.net)},
                        {"disc_digest", nn::digest_module(d.net)},
                        {"archive", bin.filename().string()},
                        {"archive_sha256", sha256_file(bin)}};
    fs::path js = stem;
    js += ".json";
    std::ofstream(js) << j.dump(2) << "\n";
}

/// Restores the generator and discriminator saved under `stem`.
inline std::pair<Generator, Discriminator> load_gan_checkpoint(const fs::path& stem, GanConfig* cfg_out = nullptr)
{
    fs::path js = stem;
    js += ".json";
    std::ifstream in(js);
    if (!in) {
        throw DependencyError("missing GAN checkpoint manifest " + js.string());
    }
    const auto j = nlohmann::json::parse(in);
    const GanConfig cfg = GanConfig::from_json(j.at("config"));
    Generator g(cfg);
    Discriminator d(cfg);
    fs::path bin = stem;
    bin += ".bin";
    const auto ar = nn::TensorArchive::load(bin);
    ar.load_module("gen", g.net);
    ar.load_module("disc", d.net);
    if (nn::digest_module(g.net) != j.at("gen_digest").get<std::string>()) {
        throw DependencyError("GAN checkpoint " + bin.string() + " does not match its manifest");
    }
    if (cfg_out != nullptr) {
        *cfg_out = cfg;
    }
    return {std::move(g), std::move(d)};
}

namespace detail {

inline std::vector<double> probs_of(const Tensor& out)
{
    std::vector<double> p(static_cast<std::size_t>(out.n()));
    for (int i = 0; i < out.n(); ++i) {
        p[static_cast<std::size_t>(i)] = out.sample(i)[0];
    }
    return p;
}

inline Tensor grad_tensor(const std::vector<double>& g, const Shape& s)
{
    Tensor t(s);
    for (std::size_t i = 0; i < g.size(); ++i) {
        t.sample(static_cast<int>(i))[0] = static_cast<float>(g[i]);
    }
    return t;
}

struct RewardSignal {
    double reward = 0.0;
    double mean_sim = 0.0;
};

/// Computes the reward from (fake, real) batches in [-1,1]; never touches G or D.
using RewardFn = std::function<RewardSignal(const Tensor& fake, const std::vector<std::size_t>& real_idx)>;

struct StepOut {
    double l_d = 0.0;
    double l_g = 0.0;
    RewardSignal signal;
};

/// One iteration: D on the real batch, D on the fake batch (gradients summed),
/// reward, clipped D step; then the generator's non-saturating step through D.
inline StepOut adversarial_step(Generator& g, Discriminator& d, nn::Adam& opt_g, nn::Adam& opt_d,
                                const Tensor& real, const Tensor& z, const std::vector<std::size_t>& real_idx,
                                const GanConfig& cfg, const RewardFn* reward_fn)
{
    StepOut out;
    d.net.zero_grad();
    const Tensor p_real_t = d.net.forward(real);
    const auto p_real = probs_of(p_real_t);
    d.net.backward(grad_tensor(bce_mean_grad(p_real, cfg.real_label), p_real_t.shape()), false);

    const Tensor fake = g.net.forward(z);
    const Tensor p_fake_t = d.net.forward(fake);
    const auto p_fake = probs_of(p_fake_t);
    d.net.backward(grad_tensor(bce_mean_grad(p_fake, 0.0), p_fake_t.shape()), false);
    out.l_d = d_loss(p_real, p_fake, cfg.real_label).total;

    if (reward_fn != nullptr) {
        out.signal = (*reward_fn)(fake, real_idx);
    }
    nn::clip_gradients(d.net.parameters(), cfg.clip_value);
    opt_d.step();

    g.net.zero_grad();
    d.net.set_all_trainable(false);
    const Tensor p_gen_t = d.net.forward(fake);
    const auto p_gen = probs_of(p_gen_t);
    out.l_g = g_loss(p_gen);
    const Tensor grad_fake = d.net.backward(grad_tensor(g_loss_grad(p_gen), p_gen_t.shape()), true);
    d.net.set_all_trainable(true);
    g.net.backward(grad_fake, false);
    nn::clip_gradients(g.net.parameters(), cfg.clip_value);
    opt_g.step();
    return out;
}

inline void check_data(const std::vector<Image>& data, const GanConfig& cfg)
{
    if (data.empty()) {
        throw ConfigError("GAN training data is empty");
    }
    for (const auto& img : data) {
        if (img.height() != cfg.image_size || img.width() != cfg.image_size) {
            throw ConfigError("GAN training images must be " + std::to_string(cfg.image_size) + "x"
                              + std::to_string(cfg.image_size));
        }
    }
}

inline TrainResult run_loop(Generator gen, Discriminator disc, const std::vector<Image>& data, const GanConfig& cfg,
                            const RewardFn* reward_fn, const std::optional<fs::path>& checkpoint_dir,
                            long max_iterations)
{
    cfg.validate();
    check_data(data, cfg);
    if (gen.image_size != cfg.image_size || disc.image_size != cfg.image_size || gen.latent_dim != cfg.latent_dim) {
        throw ConfigError("generator/discriminator shape does not match GanConfig");
    }
    nn::Adam opt_g(gen.net.parameters(), cfg.lr, cfg.beta1, 0.999);
    nn::Adam opt_d(disc.net.parameters(), cfg.lr, cfg.beta1, 0.999);
    TrainResult result;
    const std::size_t batch = std::min(data.size(), static_cast<std::size_t>(cfg.batch_size));
    if (batch < 2) {
        throw ConfigError("GAN training needs at least 2 images");
    }
    const std::size_t per_epoch = data.size() / batch;
    std::vector<std::size_t> order(data.size());
    long iter = 0;
    auto checkpoint = [&](int epoch) {
        if (!checkpoint_dir) {
            return;
        }
        char name[64];
        std::snprintf(name, sizeof(name), "gan_epoch_%04d", epoch);
        fs::create_directories(*checkpoint_dir);
        save_gan_checkpoint(*checkpoint_dir / name, gen, disc, cfg, epoch);
        result.checkpoints.push_back(*checkpoint_dir / name);
    };
    for (int epoch = 0; epoch < cfg.epochs && iter != max_iterations; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = make_rng(cfg.seed, "gan-shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t b = 0; b < per_epoch && iter != max_iterations; ++b, ++iter) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b * batch),
                                         order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch));
            std::vector<Image> imgs;
            imgs.reserve(batch);
            for (std::size_t i : idx) {
                imgs.push_back(data[i]);
            }
            const Tensor real = to_batch(imgs, -1.0f, 1.0f);
            Rng zrng = make_rng(cfg.seed, "gan-z", static_cast<std::uint64_t>(iter));
            const Tensor z = latent_batch(static_cast<int>(batch), cfg.latent_dim, zrng);
            const StepOut s = adversarial_step(gen, disc, opt_g, opt_d, real, z, idx, cfg, reward_fn);
            TraceRecord r;
            r.iter = iter;
            r.epoch = epoch;
            r.l_d = s.l_d;
            r.reward = s.signal.reward;
            r.l_d_mod = modified_d_loss(s.l_d, s.signal.reward);
            r.l_g = s.l_g;
            r.mean_sim = s.signal.mean_sim;
            result.trace.records.push_back(r);
        }
        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) {
            checkpoint(epoch + 1);
        }
    }
    checkpoint(cfg.epochs);
    result.gen = std::move(gen);
    result.disc = std::move(disc);
    return result;
}

} // namespace detail

/// Similarity reward: i-th fake paired with the i-th real image of the batch.
inline detail::RewardFn make_reward_fn(const Scorer& scorer, const std::vector<Image>& data, const GanConfig& cfg)
{
    return [&scorer, &data, cfg](const Tensor& fake, const std::vector<std::size_t>& real_idx) {
        const int size = scorer.input_size;
        std::vector<Image> fakes;
        std::vector<Image> reals;
        for (int i = 0; i < fake.n(); ++i) {
            Image f = from_batch(fake, i, -1.0f, 1.0f);
            Image r = data[real_idx[static_cast<std::size_t>(i)]];
            if (size != cfg.image_size) {
                f = resize_bilinear(f, size, size);
                r = resize_bilinear(r, size, size);
            }
            fakes.push_back(std::move(f));
            reals.push_back(std::move(r));
        }
        const Eigen::MatrixXd ef = scorer.extractor->embed(fakes);
        const Eigen::MatrixXd er = scorer.extractor->embed(reals);
        std::vector<double> scores(fakes.size());
        for (std::size_t i = 0; i < fakes.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            scores[i] = snn::score_embeddings(ef.row(row).transpose(), er.row(row).transpose());
        }
        detail::RewardSignal s;
        s.reward = compute_reward(scores, cfg.reward_weight);
        s.mean_sim = compute_reward(scores, 1.0);
        return s;
    };
}

/// Improved-DCGAN training with the similarity reward subtracted from the
/// discriminator loss. `max_iterations` < 0 means run all epochs.
inline TrainResult train(Generator gen, Discriminator disc, const Scorer& scorer, const std::vector<Image>& data,
                         const GanConfig& cfg, const std::optional<fs::path>& checkpoint_dir = std::nullopt,
                         long max_iterations = -1)
{
    cfg.validate();
    if (scorer.extractor == nullptr) {
        throw ConfigError("GAN training needs a similarity scorer");
    }
    if (!scorer.extractor->accepts(scorer.input_size, scorer.input_size)) {
        throw ConfigError("scorer cannot take its declared input size");
    }
    if (scorer.input_size != cfg.image_size && !cfg.resize_for_scorer) {
        throw ConfigError("scorer resolution " + std::to_string(scorer.input_size) + " does not match GAN images ("
                          + std::to_string(cfg.image_size) + "); set gan.resize_for_scorer to resample");
    }
    const auto fn = make_reward_fn(scorer, data, cfg);
    return detail::run_loop(std::move(gen), std::move(disc), data, cfg, &fn, checkpoint_dir, max_iterations);
}

/// The same loop with no reward machinery at all.
inline TrainResult train_baseline(Generator gen, Discriminator disc, const std::vector<Image>& data,
                                  const GanConfig& cfg, const std::optional<fs::path>& checkpoint_dir = std::nullopt,
                                  long max_iterations = -1)
{
    return detail::run_loop(std::move(gen), std::move(disc), data, cfg, nullptr, checkpoint_dir, max_iterations);
}

} // namespace simgan::gan
