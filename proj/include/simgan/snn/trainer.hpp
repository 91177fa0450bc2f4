#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "simgan/core/error.hpp"
#include "simgan/core/random.hpp"
#include "simgan/corpus/types.hpp"
#include "simgan/nn/optim.hpp"
#include "simgan/snn/extractor.hpp"
#include "simgan/snn/losses.hpp"

namespace simgan::snn {

struct StagePlan {
    int stage_id = 1;
    std::set<int> trainable;
    int epochs = 10;
    int batch_size = 32;
    double recon_lr = 1e-3;
    double sim_lr = 5e-4;
    int input_h = 224;
    int input_w = 224;
    double margin = 1.0;
    int micro_batch = 8; ///< pairs per forward pass; gradients are summed over the whole batch

    /// Stage 1: last 8 layers, 10 epochs on 224x224 resized slides.
    static StagePlan stage1_defaults(const LayeredExtractor& f, int trainable_depth = 8)
    {
        StagePlan p;
        p.stage_id = 1;
        p.trainable = f.last_layers(trainable_depth);
        return p;
    }

    /// Stage 2: last 3 layers, 8 epochs on 64x64 patches.
    static StagePlan stage2_defaults(const LayeredExtractor& f, int trainable_depth = 3)
    {
        StagePlan p;
        p.stage_id = 2;
        p.trainable = f.last_layers(trainable_depth);
        p.epochs = 8;
        p.input_h = 64;
        p.input_w = 64;
        return p;
    }

    void validate(const LayeredExtractor& f) const
    {
        if (stage_id != 1 && stage_id != 2) {
            throw ConfigError("stage_id must be 1 or 2");
        }
        for (int i : trainable) {
            if (i < 0 || i >= f.layer_count()) {
                throw ConfigError("stage " + std::to_string(stage_id) + ": trainable index " + std::to_string(i)
                                  + " out of range [0," + std::to_string(f.layer_count()) + ")");
            }
        }
        if (epochs < 0 || batch_size <= 0 || micro_batch <= 0) {
            throw ConfigError("stage " + std::to_string(stage_id) + ": epochs >= 0, batch_size > 0 required");
        }
        if (!(recon_lr > 0) || !(sim_lr > 0) || !(margin > 0)) {
            throw ConfigError("stage " + std::to_string(stage_id) + ": learning rates and margin must be positive");
        }
        if (!f.accepts(input_h, input_w)) {
            throw ConfigError("stage " + std::to_string(stage_id) + ": extractor cannot take "
                              + std::to_string(input_h) + "x" + std::to_string(input_w) + " input");
        }
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"stage_id", stage_id},
                {"trainable_layer_indices", std::vector<int>(trainable.begin(), trainable.end())},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"recon_lr", recon_lr},
                {"sim_lr", sim_lr},
                {"input_resolution", {input_h, input_w}},
                {"margin", margin},
                {"micro_batch", micro_batch}};
    }

    static StagePlan from_json(const nlohmann::json& j)
    {
        StagePlan p;
        p.stage_id = j.at("stage_id").get<int>();
        auto idx = j.at("trainable_layer_indices").get<std::vector<int>>();
        p.trainable = std::set<int>(idx.begin(), idx.end());
        p.epochs = j.at("epochs").get<int>();
        p.batch_size = j.at("batch_size").get<int>();
        p.recon_lr = j.at("recon_lr").get<double>();
        p.sim_lr = j.at("sim_lr").get<double>();
        p.input_h = j.at("input_resolution").at(0).get<int>();
        p.input_w = j.at("input_resolution").at(1).get<int>();
        p.margin = j.value("margin", 1.0);
        p.micro_batch = j.value("micro_batch", 8);
        return p;
    }
};

struct EpochLoss {
    double contrastive = 0.0;
    double reconstruction = 0.0;
};

struct StageResult {
    LayeredExtractor extractor;
    StagePlan plan;
    std::uint64_t seed = 0;
    std::vector<EpochLoss> loss_history;
    std::string frozen_digest_before;
    std::string frozen_digest_after;
    std::string warning;
};

namespace detail {

inline Tensor pair_batch(const std::vector<corpus::PairSample>& pairs, std::span<const std::size_t> idx)
{
    std::vector<Image> imgs;
    imgs.reserve(idx.size() * 2);
    for (std::size_t i : idx) {
        imgs.push_back(pairs[i].a.pixels);
    }
    for (std::size_t i : idx) {
        imgs.push_back(pairs[i].b.pixels);
    }
    return to_batch(imgs);
}

/// Contrastive term over L2-normalised embeddings: returns the loss sum and
/// fills the gradient w.r.t. the bottleneck feature map (scaled by `scale`).
inline double contrastive_step(const Tensor& feat, const std::vector<int>& labels, double margin, double scale,
                               Tensor& grad_feat)
{
    const int m = static_cast<int>(labels.size());
    const Eigen::MatrixXd e = LayeredExtractor::pool(feat);
    grad_feat = Tensor(feat.shape());
    const int plane = feat.h() * feat.w();
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const Eigen::VectorXd ea = e.row(i).transpose();
        const Eigen::VectorXd eb = e.row(i + m).transpose();
        const double na = ea.norm();
        const double nb = eb.norm();
        const Eigen::VectorXd ua = na > 1e-12 ? Eigen::VectorXd(ea / na) : Eigen::VectorXd::Zero(ea.size());
        const Eigen::VectorXd ub = nb > 1e-12 ? Eigen::VectorXd(eb / nb) : Eigen::VectorXd::Zero(eb.size());
        const Eigen::VectorXd diff = ua - ub;
        const double d = diff.norm();
        total += contrastive_loss(d, labels[static_cast<std::size_t>(i)], margin);
        if (d < 1e-12) {
            continue;
        }
        const double dl = scale * contrastive_loss_grad(d, labels[static_cast<std::size_t>(i)], margin);
        const Eigen::VectorXd gu = dl * diff / d;
        const Eigen::VectorXd ga = normalize_backward(ea, gu);
        const Eigen::VectorXd gb = normalize_backward(eb, -gu);
        for (int c = 0; c < feat.c(); ++c) {
            float* pa = grad_feat.sample(i) + static_cast<std::size_t>(c) * plane;
            float* pb = grad_feat.sample(i + m) + static_cast<std::size_t>(c) * plane;
            const auto va = static_cast<float>(ga(c) / plane);
            const auto vb = static_cast<float>(gb(c) / plane);
            for (int k = 0; k < plane; ++k) {
                pa[k] = va;
                pb[k] = vb;
            }
        }
    }
    return total;
}

inline void add_into(std::vector<Tensor>& acc, const std::vector<nn::Parameter*>& params)
{
    for (std::size_t i = 0; i < params.size(); ++i) {
        acc[i] += params[i]->grad;
        params[i]->grad.fill(0.0f);
    }
}

} // namespace detail

/// One fine-tuning stage. Contrastive gradients drive the Adam (sim) optimiser
/// and reconstruction gradients the Adagrad (recon) optimiser; both step once
/// per batch over the trainable layers only.
inline StageResult run_stage(LayeredExtractor extractor, const StagePlan& plan,
                             const std::vector<corpus::PairSample>& pairs, std::uint64_t seed)
{
    plan.validate(extractor);
    if (pairs.empty()) {
        throw ConfigError("run_stage: stage " + std::to_string(plan.stage_id) + " has no training pairs");
    }
    for (const auto& p : pairs) {
        if (p.a.pixels.height() != plan.input_h || p.a.pixels.width() != plan.input_w
            || p.b.pixels.height() != plan.input_h || p.b.pixels.width() != plan.input_w) {
            throw ConfigError("run_stage: stage " + std::to_string(plan.stage_id) + " expects "
                              + std::to_string(plan.input_h) + "x" + std::to_string(plan.input_w) + " pairs");
        }
    }
    const bool has_decoder = extractor.layer_count() > extractor.encoder_count();

    extractor.set_trainable(plan.trainable);
    StageResult result;
    result.plan = plan;
    result.seed = seed;
    result.frozen_digest_before = extractor.frozen_digest();
    const bool frozen = plan.trainable.empty();
    if (frozen) {
        result.warning = "stage " + std::to_string(plan.stage_id) + ": trainable set is empty; model unchanged";
    }

    std::vector<nn::Parameter*> params = extractor.trainable_parameters();
    nn::Adam sim_opt(params, plan.sim_lr);
    nn::Adagrad recon_opt(params, plan.recon_lr);
    std::vector<Tensor> sim_grad;
    std::vector<Tensor> recon_grad;
    for (auto* p : params) {
        sim_grad.emplace_back(p->value.shape());
        recon_grad.emplace_back(p->value.shape());
    }

    std::vector<std::size_t> order(pairs.size());
    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = make_rng(seed, "stage-shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        EpochLoss sums;
        double pixel_count = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(plan.batch_size)) {
            const std::size_t bsz = std::min(order.size() - start, static_cast<std::size_t>(plan.batch_size));
            for (auto& g : sim_grad) {
                g.fill(0.0f);
            }
            for (auto& g : recon_grad) {
                g.fill(0.0f);
            }
            const double pixels_per_batch
                = static_cast<double>(2 * bsz) * 3.0 * plan.input_h * plan.input_w;
            for (std::size_t ms = 0; ms < bsz; ms += static_cast<std::size_t>(plan.micro_batch)) {
                const std::size_t msz = std::min(bsz - ms, static_cast<std::size_t>(plan.micro_batch));
                std::span<const std::size_t> idx(order.data() + start + ms, msz);
                std::vector<int> labels;
                for (std::size_t i : idx) {
                    labels.push_back(pairs[i].label);
                }
                const Tensor x = detail::pair_batch(pairs, idx);
                extractor.zero_grad();
                const Tensor feat = frozen ? extractor.features(x) : extractor.train_encode(x);

                Tensor gfeat;
                sums.contrastive += detail::contrastive_step(feat, labels, plan.margin,
                                                             1.0 / static_cast<double>(bsz), gfeat);
                if (!frozen) {
                    extractor.backward_encoder(gfeat);
                    detail::add_into(sim_grad, params);
                }

                if (has_decoder) {
                    Tensor grad_img;
                    if (frozen) {
                        const Tensor recon = extractor.reconstruct(x);
                        sums.reconstruction += squared_error(recon, x, 1.0, grad_img);
                    } else {
                        const Tensor recon = extractor.train_decode(feat);
                        sums.reconstruction += squared_error(recon, x, 1.0 / pixels_per_batch, grad_img);
                        const Tensor gback = extractor.backward_decoder(grad_img);
                        if (!gback.empty()) {
                            extractor.backward_encoder(gback);
                        }
                        detail::add_into(recon_grad, params);
                    }
                }
            }
            pixel_count += pixels_per_batch;
            if (frozen) {
                continue;
            }
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i]->grad = recon_grad[i];
            }
            recon_opt.step();
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i]->grad = sim_grad[i];
            }
            sim_opt.step();
        }
        sums.contrastive /= static_cast<double>(pairs.size());
        sums.reconstruction = has_decoder ? sums.reconstruction / pixel_count : 0.0;
        result.loss_history.push_back(sums);
    }
    extractor.zero_grad();
    result.frozen_digest_after = extractor.frozen_digest();
    result.extractor = std::move(extractor);
    return result;
}

/// Two progressively narrowing stages: whole slides, then patches.
inline std::pair<LayeredExtractor, std::vector<StageResult>>
train_mft(const LayeredExtractor& extractor, const StagePlan& stage1, const StagePlan& stage2,
          const std::vector<corpus::PairSample>& wsi_pairs, const std::vector<corpus::PairSample>& patch_pairs,
          std::uint64_t seed)
{
    if (stage1.stage_id != 1 || stage2.stage_id != 2) {
        throw ConfigError("train_mft: plans must be stage 1 then stage 2");
    }
    if (!std::includes(stage1.trainable.begin(), stage1.trainable.end(), stage2.trainable.begin(),
                       stage2.trainable.end())) {
        throw ConfigError("train_mft: stage-2 trainable layers must be a subset of stage-1 trainable layers");
    }
    if (stage1.input_h < stage2.input_h || stage1.input_w < stage2.input_w) {
        throw ConfigError("train_mft: stage-1 (slide) resolution must not be smaller than stage-2 (patch)");
    }
    stage1.validate(extractor);
    stage2.validate(extractor);
    std::vector<StageResult> results;
    results.push_back(run_stage(extractor, stage1, wsi_pairs, derive_seed(seed, "mft-stage", 1)));
    results.push_back(run_stage(results[0].extractor, stage2, patch_pairs, derive_seed(seed, "mft-stage", 2)));
    LayeredExtractor out = results[1].extractor;
    return {std::move(out), std::move(results)};
}

/// Reconstruction-only warm start over all layers (stands in for ImageNet weights).
inline std::vector<double> pretrain_reconstruction(LayeredExtractor& extractor, const std::vector<Image>& images,
                                                   int epochs, int batch_size, double lr, std::uint64_t seed,
                                                   int micro_batch = 8)
{
    if (images.empty()) {
        throw ConfigError("pretrain_reconstruction: no images");
    }
    if (extractor.layer_count() == extractor.encoder_count()) {
        throw ConfigError("pretrain_reconstruction: extractor has no decoder");
    }
    const auto saved = extractor.trainable_indices();
    extractor.set_all_trainable(true);
    auto params = extractor.trainable_parameters();
    nn::Adam opt(params, lr);
    std::vector<Tensor> acc;
    for (auto* p : params) {
        acc.emplace_back(p->value.shape());
    }
    std::vector<double> history;
    std::vector<std::size_t> order(images.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = make_rng(seed, "pretrain-shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        double count = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            const std::size_t bsz = std::min(order.size() - start, static_cast<std::size_t>(batch_size));
            for (auto& g : acc) {
                g.fill(0.0f);
            }
            const double pixels = static_cast<double>(bsz) * images[0].area() * 3.0;
            for (std::size_t ms = 0; ms < bsz; ms += static_cast<std::size_t>(micro_batch)) {
                const std::size_t msz = std::min(bsz - ms, static_cast<std::size_t>(micro_batch));
                std::vector<Image> batch;
                for (std::size_t k = 0; k < msz; ++k) {
                    batch.push_back(images[order[start + ms + k]]);
                }
                const Tensor x = to_batch(batch);
                extractor.zero_grad();
                const Tensor recon = extractor.train_decode(extractor.train_encode(x));
                Tensor g;
                total += squared_error(recon, x, 1.0 / pixels, g);
                extractor.backward_encoder(extractor.backward_decoder(g));
                detail::add_into(acc, params);
            }
            count += pixels;
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i]->grad = acc[i];
            }
            opt.step();
        }
        history.push_back(total / count);
    }
    extractor.zero_grad();
    extractor.set_trainable(saved);
    return history;
}

} // namespace simgan::snn
