#include <gtest/gtest.h>

#include <cmath>

#include "simgan/downstream/classifier.hpp"
#include "simgan/downstream/dataset.hpp"

using namespace simgan;
using namespace simgan::downstream;

namespace {

// 16x16 input -> 8x8x8 features.
snn::ExtractorConfig small_backbone()
{
    using nn::Activation;
    snn::ExtractorConfig c;
    c.name = "cls-small";
    c.encoder = {snn::LayerSpec{snn::LayerKind::Conv, 3, 6, 3, 2, 1, Activation::ReLU},
                 snn::LayerSpec{snn::LayerKind::Conv, 6, 8, 3, 1, 1, Activation::ReLU},
                 snn::LayerSpec{snn::LayerKind::Conv, 8, 8, 1, 1, 0, Activation::Identity}};
    return c;
}

ClsConfig small_cfg()
{
    ClsConfig c = ClsConfig::desk();
    c.input_size = 16;
    c.head_units = 16;
    c.epochs = 4;
    c.batch_size = 8;
    c.seed = 3;
    return c;
}

// Class 0 reddish, class 1 bluish, with per-pixel noise.
LabeledSet colour_set(int per_class, std::uint64_t seed)
{
    LabeledSet s;
    s.class_names = {"blue", "red"};
    Rng rng(seed);
    for (int i = 0; i < 2 * per_class; ++i) {
        const int label = i % 2;
        Image img(16, 16);
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                const float n = static_cast<float>(uniform(rng, 0.0, 0.3));
                img.at(0, y, x) = (label == 1 ? 0.6f : 0.1f) + n;
                img.at(1, y, x) = 0.3f + n;
                img.at(2, y, x) = (label == 0 ? 0.6f : 0.1f) + n;
            }
        }
        s.add(std::move(img), label);
    }
    return s;
}

// Independent confusion tally.
std::vector<std::vector<long>> tally(const std::vector<int>& t, const std::vector<int>& p, int k)
{
    std::vector<std::vector<long>> m(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k)));
    for (std::size_t i = 0; i < t.size(); ++i) {
        m[static_cast<std::size_t>(t[i])][static_cast<std::size_t>(p[i])] += 1;
    }
    return m;
}

} // namespace

TEST(ClsConfig, StepScheduleArithmetic)
{
    const ClsConfig c;
    EXPECT_DOUBLE_EQ(c.lr_at(0), 1e-5);
    EXPECT_DOUBLE_EQ(c.lr_at(6), 1e-5);
    EXPECT_NEAR(c.lr_at(7), 1e-6, 1e-18);
    EXPECT_NEAR(c.lr_at(8), 1e-6, 1e-18);
    EXPECT_NEAR(c.lr_at(14), 1e-7, 1e-19);
}

TEST(ClsConfig, DefaultsAndValidation)
{
    const ClsConfig c;
    EXPECT_EQ(c.trainable_tail_layers, 16);
    EXPECT_EQ(c.head_units, 1024);
    EXPECT_EQ(c.epochs, 10);
    EXPECT_EQ(c.batch_size, 32);
    EXPECT_NO_THROW(c.validate());
    ClsConfig bad = c;
    bad.test_fraction = 0.4;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.lr_step = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    const ClsConfig back = ClsConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Finetune, FrozenLayersUnchangedAndScheduleApplied)
{
    const snn::LayeredExtractor bb(small_backbone(), 1);
    ClsConfig cfg = small_cfg();
    cfg.trainable_tail_layers = 2; // the two dense layers only
    cfg.lr_step = 2;
    TrainLog log;
    const Classifier cls = finetune_classifier(colour_set(12, 1), bb, cfg, &log);
    EXPECT_EQ(log.frozen_digest_before, log.frozen_digest_after);
    std::set<int> enc{0, 1, 2};
    EXPECT_EQ(cls.backbone().digest(enc), bb.digest(enc));
    ASSERT_EQ(log.epoch_lr.size(), 4u);
    EXPECT_DOUBLE_EQ(log.epoch_lr[1], cfg.lr);
    EXPECT_DOUBLE_EQ(log.epoch_lr[2], cfg.lr * cfg.lr_gamma);
}

TEST(Finetune, TailReachesIntoBackbone)
{
    const snn::LayeredExtractor bb(small_backbone(), 1);
    ClsConfig cfg = small_cfg();
    cfg.trainable_tail_layers = 3;
    cfg.epochs = 1;
    const Classifier cls = finetune_classifier(colour_set(8, 2), bb, cfg);
    EXPECT_FALSE(cls.layer_trainable(1));
    EXPECT_TRUE(cls.layer_trainable(2));
    EXPECT_EQ(cls.backbone().digest({0, 1}), bb.digest({0, 1}));
    EXPECT_NE(cls.backbone().digest({2}), bb.digest({2}));
}

TEST(Finetune, TailLargerThanDepthTrainsEverything)
{
    const snn::LayeredExtractor bb(small_backbone(), 1);
    ClsConfig cfg = small_cfg();
    cfg.epochs = 1;
    const Classifier cls = finetune_classifier(colour_set(8, 2), bb, cfg);
    for (int i = 0; i < cls.layer_count(); ++i) {
        EXPECT_TRUE(cls.layer_trainable(i));
    }
    EXPECT_NE(cls.backbone().digest({0}), bb.digest({0}));
}

TEST(Finetune, SingleClassIsConfigError)
{
    LabeledSet s = colour_set(4, 1);
    std::fill(s.labels.begin(), s.labels.end(), 1);
    EXPECT_THROW(finetune_classifier(s, snn::LayeredExtractor(small_backbone(), 1), small_cfg()), ConfigError);
}

TEST(Finetune, ZeroEpochsIsNearChance)
{
    ClsConfig cfg = small_cfg();
    cfg.epochs = 0;
    const snn::LayeredExtractor bb(small_backbone(), 1);
    const Classifier cls = finetune_classifier(colour_set(8, 1), bb, cfg);
    const EvalReport r = evaluate(cls, colour_set(50, 9));
    EXPECT_GE(r.overall, 0.25);
    EXPECT_LE(r.overall, 0.75);
}

TEST(Finetune, LearnsSeparableTaskAndIsDeterministic)
{
    const snn::LayeredExtractor bb(small_backbone(), 4);
    ClsConfig cfg = small_cfg();
    cfg.epochs = 6;
    const Classifier a = finetune_classifier(colour_set(24, 1), bb, cfg);
    const Classifier b = finetune_classifier(colour_set(24, 1), bb, cfg);
    EXPECT_EQ(a.digest(), b.digest());
    const EvalReport r = evaluate(a, colour_set(30, 5));
    EXPECT_GE(r.overall, 0.9);
}

TEST(Evaluate, PerfectStub)
{
    const std::vector<int> t{0, 1, 1, 0, 1};
    const EvalReport r = score_predictions(t, t, {"a", "b"});
    EXPECT_EQ(r.overall, 1.0);
    EXPECT_EQ(r.per_class.at("a"), 1.0);
    EXPECT_EQ(r.per_class.at("b"), 1.0);
}

TEST(Evaluate, ConstantClassStub)
{
    std::vector<int> t(100);
    for (int i = 0; i < 100; ++i) {
        t[static_cast<std::size_t>(i)] = i < 30 ? 0 : 1;
    }
    const std::vector<int> p(100, 1);
    const EvalReport r = score_predictions(t, p, {"benign", "invasive"});
    EXPECT_DOUBLE_EQ(r.overall, 0.7);
    EXPECT_EQ(r.per_class.at("benign"), 0.0);
    EXPECT_EQ(r.per_class.at("invasive"), 1.0);
}

TEST(Evaluate, ConfusionAndRecombination)
{
    Rng rng(11);
    std::vector<int> t;
    std::vector<int> p;
    for (int i = 0; i < 997; ++i) {
        t.push_back(uniform_int(rng, 0, 2));
        p.push_back(uniform_int(rng, 0, 9) < 7 ? t.back() : uniform_int(rng, 0, 2));
    }
    const EvalReport r = score_predictions(t, p, {"x", "y", "z"});
    const auto oracle = tally(t, p, 3);
    EXPECT_EQ(r.confusion, oracle);
    double recombined = 0.0;
    long total = 0;
    const char* names[] = {"x", "y", "z"};
    for (int c = 0; c < 3; ++c) {
        const long n = std::accumulate(oracle[static_cast<std::size_t>(c)].begin(),
                                       oracle[static_cast<std::size_t>(c)].end(), 0L);
        EXPECT_EQ(r.class_counts.at(names[c]), n);
        recombined += r.per_class.at(names[c]) * static_cast<double>(n);
        total += n;
    }
    EXPECT_NEAR(recombined / static_cast<double>(total), r.overall, 1e-12);
}

TEST(Evaluate, EmptyTestSetThrows)
{
    const std::vector<int> none;
    EXPECT_THROW(score_predictions(none, none, {"a", "b"}), InvalidInput);
    const Classifier cls(snn::LayeredExtractor(small_backbone(), 1), 2, small_cfg());
    EXPECT_THROW(evaluate(cls, LabeledSet{}), InvalidInput);
}

TEST(Comparison, SharedTestDigestAndReproducible)
{
    const snn::LayeredExtractor bb(small_backbone(), 2);
    ClsConfig cfg = small_cfg();
    cfg.epochs = 2;
    const LabeledSet synth = colour_set(10, 100);
    const LabeledSet train = colour_set(10, 200);
    const LabeledSet test = colour_set(10, 300);
    const auto [s1, r1] = run_comparison(synth, train, test, bb, cfg);
    const auto [s2, r2] = run_comparison(synth, train, test, bb, cfg);
    EXPECT_EQ(s1.test_digest, r1.test_digest);
    EXPECT_EQ(s1.test_digest, content_digest(test));
    EXPECT_EQ(s1.train_source, "synthetic");
    EXPECT_EQ(r1.train_source, "real");
    EXPECT_EQ(s1.to_json(), s2.to_json());
    EXPECT_EQ(r1.to_json(), r2.to_json());
}

TEST(Comparison, OverlapIsValidationError)
{
    const snn::LayeredExtractor bb(small_backbone(), 2);
    const LabeledSet train = colour_set(6, 200);
    LabeledSet test = colour_set(6, 300);
    test.add(train.images[3], train.labels[3]);
    EXPECT_THROW(run_comparison(colour_set(6, 100), train, test, bb, small_cfg()), ValidationError);
}

TEST(Dataset, SplitBySlideKeepsSlidesTogether)
{
    std::vector<corpus::Patch> patches;
    for (int s = 0; s < 10; ++s) {
        for (int k = 0; k < 3; ++k) {
            corpus::Patch p;
            p.pixels = Image(2, 2, static_cast<float>(s * 3 + k) / 30.0f);
            p.source_slide = "s" + std::to_string(s);
            p.class_label = s % 2 ? "b" : "a";
            patches.push_back(p);
        }
    }
    const auto [train, test] = split_by_slide(patches, 0.7, 1);
    EXPECT_EQ(train.size() + test.size(), patches.size());
    std::set<std::string> ts;
    for (const auto& p : train) {
        ts.insert(p.source_slide);
    }
    for (const auto& p : test) {
        EXPECT_FALSE(ts.contains(p.source_slide));
    }
    EXPECT_EQ(ts.size(), 8u); // round(0.7 * 5) = 4 per class
    const auto names = class_names_of(patches);
    EXPECT_NO_THROW(check_disjoint(labeled_from_patches(train, names), labeled_from_patches(test, names), "split"));
}
