#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/random.hpp"
#include "simgan/downstream/dataset.hpp"
#include "simgan/nn/layers.hpp"
#include "simgan/nn/optim.hpp"
#include "simgan/nn/sequential.hpp"
#include "simgan/snn/extractor.hpp"

namespace simgan::downstream {

struct ClsConfig {
    int trainable_tail_layers = 16;
    int head_units = 1024;
    int epochs = 10;
    int batch_size = 32;
    double lr = 1e-5;
    int lr_step = 7;
    double lr_gamma = 0.1;
    double train_fraction = 0.7;
    double test_fraction = 0.3;
    std::uint64_t seed = 0;
    int input_size = 32; ///< images are resized to input_size^2

    /// CPU-sized profile: same schedule, higher base rate for a backbone that
    /// is orders of magnitude smaller than the reference one.
    static ClsConfig desk()
    {
        ClsConfig c;
        c.lr = 1e-3;
        return c;
    }

    /// Learning rate in effect during 0-based `epoch` (step decay).
    [[nodiscard]] double lr_at(int epoch) const
    {
        return lr * std::pow(lr_gamma, epoch / lr_step);
    }

    void validate() const
    {
        if (trainable_tail_layers < 1 || head_units < 1 || epochs < 0 || batch_size < 1 || !(lr > 0) || lr_step < 1
            || !(lr_gamma > 0) || input_size < 1) {
            throw ConfigError("downstream: tail/head/batch/lr/lr_step/lr_gamma/input_size must be positive");
        }
        if (train_fraction <= 0 || test_fraction <= 0 || std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
            throw ConfigError("downstream: split fractions must be positive and sum to 1");
        }
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"trainable_tail_layers", trainable_tail_layers},
                {"head_units", head_units},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"lr", lr},
                {"lr_step", lr_step},
                {"lr_gamma", lr_gamma},
                {"split", {train_fraction, test_fraction}},
                {"seed", seed},
                {"input_size", input_size}};
    }

    static ClsConfig from_json(const nlohmann::json& j) { return from_json(j, ClsConfig{}); }

    static ClsConfig from_json(const nlohmann::json& j, ClsConfig c)
    {
        c.trainable_tail_layers = j.value("trainable_tail_layers", c.trainable_tail_layers);
        c.head_units = j.value("head_units", c.head_units);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.lr_step = j.value("lr_step", c.lr_step);
        c.lr_gamma = j.value("lr_gamma", c.lr_gamma);
        if (j.contains("split")) {
            c.train_fraction = j.at("split").at(0).get<double>();
            c.test_fraction = j.at("split").at(1).get<double>();
        }
        c.seed = j.value("seed", c.seed);
        c.input_size = j.value("input_size", c.input_size);
        return c;
    }
};

/// Conv backbone (encoder of a LayeredExtractor) followed by
/// global-average-pool -> dense(head_units) -> ReLU -> dense(n_classes).
class Classifier {
public:
    Classifier(const snn::LayeredExtractor& backbone, int n_classes, const ClsConfig& cfg)
        : backbone_(backbone), input_size_(cfg.input_size)
    {
        if (n_classes < 2) {
            throw ConfigError("classifier needs at least 2 classes");
        }
        backbone_.check_input(cfg.input_size, cfg.input_size);
        const int emb = backbone_.embedding_dim();
        head_.add<nn::GlobalAvgPool>();
        auto& fc1 = head_.add<nn::Linear>(emb, cfg.head_units);
        head_.add<nn::Act>(nn::Activation::ReLU);
        auto& fc2 = head_.add<nn::Linear>(cfg.head_units, n_classes);
        Rng rng = make_rng(cfg.seed, "cls-head");
        init_linear(fc1, rng);
        init_linear(fc2, rng);
        set_tail(cfg.trainable_tail_layers);
    }

    /// Parameterized layers: backbone encoder layers then the two dense layers.
    [[nodiscard]] int layer_count() const { return backbone_.encoder_count() + 2; }
    [[nodiscard]] int n_classes() const { return dynamic_cast<const nn::Linear&>(head_[3]).out_features(); }
    [[nodiscard]] int input_size() const { return input_size_; }

    /// Makes the last `n` parameterized layers trainable (capped at the depth).
    void set_tail(int n)
    {
        const int total = layer_count();
        const int first = std::max(0, total - n);
        std::set<int> bb;
        for (int i = first; i < backbone_.encoder_count(); ++i) {
            bb.insert(i);
        }
        backbone_.set_trainable(bb);
        head_[1].set_trainable(first <= total - 2);
        head_[3].set_trainable(true);
        first_trainable_ = first;
    }

    [[nodiscard]] bool layer_trainable(int i) const { return i >= first_trainable_; }

    /// Digest of every frozen parameterized layer.
    [[nodiscard]] std::string frozen_digest() const
    {
        std::set<int> frozen;
        for (int i = 0; i < std::min(first_trainable_, backbone_.encoder_count()); ++i) {
            frozen.insert(i);
        }
        std::string d = backbone_.digest(frozen);
        if (!layer_trainable(layer_count() - 2)) {
            d = sha256_hex(d + nn::digest_module(head_[1]));
        }
        return d;
    }

    [[nodiscard]] std::string digest() const
    {
        std::set<int> enc;
        for (int i = 0; i < backbone_.encoder_count(); ++i) {
            enc.insert(i);
        }
        return sha256_hex(backbone_.digest(enc) + nn::digest_module(head_));
    }

    /// Class logits, one row per image.
    [[nodiscard]] Eigen::MatrixXd logits(std::span<const Image> images, int chunk = 64) const
    {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), n_classes());
        for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(chunk)) {
            const std::size_t count = std::min(images.size() - start, static_cast<std::size_t>(chunk));
            const Tensor y = head_.infer(backbone_.features(batch(images.subspan(start, count))));
            for (std::size_t i = 0; i < count; ++i) {
                for (int c = 0; c < n_classes(); ++c) {
                    out(static_cast<Eigen::Index>(start + i), c) = y.at(static_cast<int>(i), c, 0, 0);
                }
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<int> predict(std::span<const Image> images) const
    {
        const Eigen::MatrixXd l = logits(images);
        std::vector<int> out(images.size());
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
            Eigen::Index arg = 0;
            l.row(i).maxCoeff(&arg);
            out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        }
        return out;
    }

    /// One optimisation step on a batch; returns the mean cross-entropy.
    double train_step(std::span<const Image> images, std::span<const int> labels, nn::Adam& opt)
    {
        opt.zero_grad();
        const Tensor x = batch(images);
        Tensor h = x;
        for (int i = 0; i < backbone_.encoder_count(); ++i) {
            h = backbone_.layer(i).forward(h);
        }
        const Tensor y = head_.forward(h);
        const int n = y.n();
        const int k = y.c();
        Tensor g(n, k, 1, 1);
        double loss = 0.0;
        for (int i = 0; i < n; ++i) {
            double mx = y.at(i, 0, 0, 0);
            for (int c = 1; c < k; ++c) {
                mx = std::max(mx, static_cast<double>(y.at(i, c, 0, 0)));
            }
            double z = 0.0;
            for (int c = 0; c < k; ++c) {
                z += std::exp(y.at(i, c, 0, 0) - mx);
            }
            const int t = labels[static_cast<std::size_t>(i)];
            loss += -(y.at(i, t, 0, 0) - mx - std::log(z));
            for (int c = 0; c < k; ++c) {
                const double p = std::exp(y.at(i, c, 0, 0) - mx) / z;
                g.at(i, c, 0, 0) = static_cast<float>((p - (c == t ? 1.0 : 0.0)) / n);
            }
        }
        const bool backbone_trains = first_trainable_ < backbone_.encoder_count();
        const Tensor gh = head_.backward(g, backbone_trains);
        if (backbone_trains) {
            backbone_.backward_range(0, backbone_.encoder_count(), gh, false);
        }
        opt.step();
        return loss / n;
    }

    std::vector<nn::Parameter*> trainable_parameters()
    {
        std::vector<nn::Parameter*> out = backbone_.trainable_parameters();
        for (int i : {1, 3}) {
            if (head_[static_cast<std::size_t>(i)].trainable()) {
                auto p = head_[static_cast<std::size_t>(i)].parameters();
                out.insert(out.end(), p.begin(), p.end());
            }
        }
        return out;
    }

    [[nodiscard]] const snn::LayeredExtractor& backbone() const { return backbone_; }

private:
    static void init_linear(nn::Linear& l, Rng& rng)
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_features()));
        for (float& w : l.weight().value.span()) {
            w = static_cast<float>(uniform(rng, -bound, bound));
        }
        for (float& b : l.bias().value.span()) {
            b = static_cast<float>(uniform(rng, -bound, bound));
        }
    }

    [[nodiscard]] Tensor batch(std::span<const Image> images) const
    {
        std::vector<Image> scaled;
        scaled.reserve(images.size());
        for (const auto& img : images) {
            scaled.push_back(img.height() == input_size_ && img.width() == input_size_
                                 ? img
                                 : resize_bilinear(img, input_size_, input_size_));
        }
        return to_batch(scaled);
    }

    snn::LayeredExtractor backbone_;
    nn::Sequential head_;
    int input_size_ = 32;
    int first_trainable_ = 0;
};

struct TrainLog {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_lr;
    std::string frozen_digest_before;
    std::string frozen_digest_after;
};

/// Fine-tunes a classifier whose backbone starts from `backbone`.
inline Classifier finetune_classifier(const LabeledSet& train, const snn::LayeredExtractor& backbone,
                                      const ClsConfig& cfg, TrainLog* log = nullptr)
{
    cfg.validate();
    if (train.present_labels().size() < 2) {
        throw ConfigError("finetune_classifier: training set must contain at least 2 classes");
    }
    const int n_classes = std::max(static_cast<int>(train.class_names.size()),
                                   *train.present_labels().rbegin() + 1);
    Classifier cls(backbone, n_classes, cfg);
    TrainLog local;
    local.frozen_digest_before = cls.frozen_digest();
    nn::Adam opt(cls.trainable_parameters(), cfg.lr);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_lr(cfg.lr_at(epoch));
        Rng rng = make_rng(cfg.seed, "cls-shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
            std::vector<Image> imgs;
            std::vector<int> labels;
            for (std::size_t i = start; i < start + count; ++i) {
                imgs.push_back(train.images[order[i]]);
                labels.push_back(train.labels[order[i]]);
            }
            total += cls.train_step(imgs, labels, opt);
            ++batches;
        }
        local.epoch_loss.push_back(total / std::max(1, batches));
        local.epoch_lr.push_back(opt.lr());
    }
    local.frozen_digest_after = cls.frozen_digest();
    if (local.frozen_digest_before != local.frozen_digest_after) {
        throw NumericDomainError("finetune_classifier: frozen layers changed during training");
    }
    if (log) {
        *log = std::move(local);
    }
    return cls;
}

struct EvalReport {
    double overall = 0.0;
    std::map<std::string, double> per_class;
    std::map<std::string, long> class_counts;
    std::vector<std::vector<long>> confusion; ///< [true][predicted]
    std::string train_source;                 ///< "synthetic" or "real"
    std::string test_digest;
    std::uint64_t seed = 0;

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"overall", overall},       {"per_class", per_class}, {"train_source", train_source},
                {"test_digest", test_digest}, {"seed", seed},         {"class_counts", class_counts},
                {"confusion", confusion}};
    }
};

/// Accuracy from predicted vs true labels.
inline EvalReport score_predictions(std::span<const int> truth, std::span<const int> pred,
                                    const std::vector<std::string>& class_names)
{
    if (truth.empty()) {
        throw InvalidInput("evaluate: empty test set");
    }
    if (truth.size() != pred.size()) {
        throw InvalidInput("evaluate: prediction count mismatch");
    }
    const int k = static_cast<int>(class_names.size());
    EvalReport r;
    r.confusion.assign(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
    long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k) {
            throw InvalidInput("evaluate: label out of range");
        }
        ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
        correct += truth[i] == pred[i] ? 1 : 0;
    }
    r.overall = static_cast<double>(correct) / static_cast<double>(truth.size());
    for (int c = 0; c < k; ++c) {
        const auto& row = r.confusion[static_cast<std::size_t>(c)];
        const long n = std::accumulate(row.begin(), row.end(), 0L);
        if (n > 0) {
            r.per_class[class_names[static_cast<std::size_t>(c)]] =
                static_cast<double>(row[static_cast<std::size_t>(c)]) / static_cast<double>(n);
            r.class_counts[class_names[static_cast<std::size_t>(c)]] = n;
        }
    }
    return r;
}

inline EvalReport evaluate(const Classifier& cls, const LabeledSet& test)
{
    if (test.empty()) {
        throw InvalidInput("evaluate: empty test set");
    }
    const std::vector<int> pred = cls.predict(test.images);
    std::vector<std::string> names = test.class_names;
    for (int c = static_cast<int>(names.size()); c < cls.n_classes(); ++c) {
        names.push_back(std::to_string(c));
    }
    EvalReport r = score_predictions(test.labels, pred, names);
    r.test_digest = content_digest(test);
    return r;
}

/// Trains one classifier on synthetic patches and one on real patches from the
/// same backbone and seed; both are tested on `real_test`.
inline std::pair<EvalReport, EvalReport> run_comparison(const LabeledSet& synthetic, const LabeledSet& real_train,
                                                        const LabeledSet& real_test,
                                                        const snn::LayeredExtractor& backbone, const ClsConfig& cfg)
{
    check_disjoint(real_train, real_test, "run_comparison(real_train, real_test)");
    check_disjoint(synthetic, real_test, "run_comparison(synthetic, real_test)");
    auto run = [&](const LabeledSet& train, const char* source) {
        const Classifier cls = finetune_classifier(train, backbone, cfg);
        EvalReport r = evaluate(cls, real_test);
        r.train_source = source;
        r.seed = cfg.seed;
        return r;
    };
    return {run(synthetic, "synthetic"), run(real_train, "real")};
}

} // namespace simgan::downstream
