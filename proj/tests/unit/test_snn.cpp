#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "simgan/corpus/pairs.hpp"
#include "simgan/nn/optim.hpp"
#include "simgan/snn/checkpoint.hpp"
#include "simgan/snn/extractor.hpp"
#include "simgan/snn/losses.hpp"
#include "simgan/snn/score.hpp"
#include "simgan/snn/trainer.hpp"

using namespace simgan;
using namespace simgan::snn;

namespace {

// 8x8 input -> 4x4x8 bottleneck -> 8x8x3 reconstruction.
ExtractorConfig tiny_config()
{
    using nn::Activation;
    ExtractorConfig c;
    c.name = "tiny";
    c.encoder = {LayerSpec{LayerKind::Conv, 3, 4, 3, 2, 1, Activation::ReLU},
                 LayerSpec{LayerKind::Conv, 4, 6, 3, 1, 1, Activation::ReLU},
                 LayerSpec{LayerKind::Conv, 6, 8, 1, 1, 0, Activation::Identity}};
    c.decoder = {LayerSpec{LayerKind::ConvTranspose, 8, 4, 3, 1, 1, Activation::ReLU},
                 LayerSpec{LayerKind::ConvTranspose, 4, 3, 4, 2, 1, Activation::Sigmoid}};
    return c;
}

// Same shape with smooth activations, for finite-difference checks.
ExtractorConfig smooth_config()
{
    ExtractorConfig c = tiny_config();
    for (auto& l : c.encoder) {
        if (l.act == nn::Activation::ReLU) {
            l.act = nn::Activation::Tanh;
        }
    }
    return c;
}

// One 1x1 conv from RGB to a 2-d embedding with weight rows `w0`, `w1`; no bias.
LayeredExtractor stub_extractor(std::array<float, 3> w0, std::array<float, 3> w1)
{
    ExtractorConfig c;
    c.name = "stub";
    c.encoder = {LayerSpec{LayerKind::Conv, 3, 2, 1, 1, 0, nn::Activation::Identity}};
    LayeredExtractor f(c, 0);
    auto& conv = dynamic_cast<nn::Conv2d&>(f.core(0));
    for (int k = 0; k < 3; ++k) {
        conv.weight().value[static_cast<std::size_t>(k)] = w0[static_cast<std::size_t>(k)];
        conv.weight().value[static_cast<std::size_t>(3 + k)] = w1[static_cast<std::size_t>(k)];
    }
    conv.bias().value.fill(0.0f);
    return f;
}

Image solid(int h, int w, float r, float g, float b)
{
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    }
    return img;
}

Image noise_image(int h, int w, std::uint64_t seed)
{
    Rng rng(seed);
    Image img(h, w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                img.at(c, y, x) = static_cast<float>(uniform(rng, 0.0, 1.0));
            }
        }
    }
    return img;
}

// Two-class toy patches: reddish vs bluish noise, two slides per class.
std::vector<corpus::Patch> toy_patches(int side, int per_slide, std::uint64_t seed)
{
    std::vector<corpus::Patch> out;
    for (int s = 0; s < 4; ++s) {
        for (int i = 0; i < per_slide; ++i) {
            corpus::Patch p;
            p.pixels = noise_image(side, side, derive_seed(seed, "toy", static_cast<std::uint64_t>(s * 100 + i)));
            const int cls = s % 2;
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    p.pixels.at(cls == 0 ? 0 : 2, y, x) = 0.5f + 0.5f * p.pixels.at(cls == 0 ? 0 : 2, y, x);
                }
            }
            p.source_slide = "s" + std::to_string(s);
            p.class_label = cls == 0 ? "benign" : "invasive";
            p.grid_pos = {i, 0};
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<corpus::PairSample> toy_pairs(int side, std::uint64_t seed, int n = 4)
{
    return corpus::build_pairs(toy_patches(side, 3, seed), n, corpus::AugConfig{}, seed);
}

StagePlan tiny_plan(std::set<int> trainable, int epochs, int stage = 1)
{
    StagePlan p;
    p.stage_id = stage;
    p.trainable = std::move(trainable);
    p.epochs = epochs;
    p.batch_size = 5;
    p.micro_batch = 2;
    p.input_h = 8;
    p.input_w = 8;
    return p;
}

std::vector<std::string> layer_digests(const LayeredExtractor& f)
{
    std::vector<std::string> out;
    for (int i = 0; i < f.layer_count(); ++i) {
        out.push_back(nn::digest_module(f.layer(i)));
    }
    return out;
}

} // namespace

TEST(ContrastiveLoss, Examples)
{
    EXPECT_DOUBLE_EQ(contrastive_loss(0.0, 1, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(contrastive_loss(1.5, 0, 1.0), 0.0);
    EXPECT_NEAR(contrastive_loss(0.3, 0, 1.0), 0.49, 1e-15);
    EXPECT_NEAR(contrastive_loss(0.3, 1, 1.0), 0.09, 1e-15);
}

TEST(ContrastiveLoss, RejectsInvalidArguments)
{
    EXPECT_THROW(contrastive_loss(-0.1, 1, 1.0), InvalidInput);
    EXPECT_THROW(contrastive_loss(0.1, 1, 0.0), InvalidInput);
    EXPECT_THROW(contrastive_loss(0.1, 1, -1.0), InvalidInput);
}

TEST(ContrastiveLoss, GradientMatchesCentralDifferences)
{
    const double h = 1e-6;
    for (double d : {0.1, 0.5, 0.9, 1.5}) {
        for (int y : {0, 1}) {
            const double num = (contrastive_loss(d + h, y, 1.0) - contrastive_loss(d - h, y, 1.0)) / (2 * h);
            const double ana = contrastive_loss_grad(d, y, 1.0);
            EXPECT_NEAR(ana, num, 1e-5 * std::max(1.0, std::abs(num))) << "d=" << d << " y=" << y;
        }
    }
}

TEST(ReconstructionLoss, Examples)
{
    const Image x = noise_image(6, 5, 3);
    EXPECT_DOUBLE_EQ(reconstruction_loss(x, x), 0.0);
    EXPECT_DOUBLE_EQ(reconstruction_loss(solid(4, 4, 0, 0, 0), solid(4, 4, 1, 1, 1)), 1.0);
    Image shifted = solid(4, 4, 0.2f, 0.3f, 0.4f);
    Image base = shifted;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 4; ++y) {
            for (int xx = 0; xx < 4; ++xx) {
                shifted.at(c, y, xx) += 0.1f;
            }
        }
    }
    EXPECT_NEAR(reconstruction_loss(base, shifted), 0.01, 1e-7);
    EXPECT_THROW(reconstruction_loss(solid(4, 4, 0, 0, 0), solid(4, 5, 0, 0, 0)), InvalidInput);
}

TEST(ScorePair, IdenticalInputsScoreOne)
{
    LayeredExtractor f(tiny_config(), 5);
    const Image x = noise_image(8, 8, 11);
    EXPECT_NEAR(score_pair(f, x, x), 1.0, 1e-12);
}

TEST(ScorePair, StubExtractorAngles)
{
    const auto f = stub_extractor({1, 0, 0}, {0, 1, 0});
    EXPECT_NEAR(score_pair(f, solid(4, 4, 1, 0, 0), solid(4, 4, 0, 1, 0)), 0.0, 1e-12);
    const float s60 = static_cast<float>(std::sqrt(3.0) / 2.0);
    EXPECT_NEAR(score_pair(f, solid(4, 4, 1, 0, 0), solid(4, 4, 0.5f, s60, 0)), 0.5, 1e-6);
}

TEST(ScorePair, NegativeCosineClampsToZero)
{
    const auto f = stub_extractor({1, -1, 0}, {0, 0, 1});
    // embeddings (1,0) and (-1,0)
    EXPECT_EQ(score_pair(f, solid(4, 4, 1, 0, 0), solid(4, 4, 0, 1, 0)), 0.0);
}

TEST(ScorePair, ZeroEmbeddingIsDegenerate)
{
    const auto f = stub_extractor({1, 0, 0}, {0, 1, 0});
    EXPECT_THROW(score_pair(f, solid(4, 4, 0, 0, 0.7f), solid(4, 4, 1, 0, 0)), DegenerateEmbedding);
}

TEST(ScorePair, RejectsUnacceptedResolution)
{
    LayeredExtractor f(tiny_config(), 5);
    EXPECT_THROW(score_pair(f, noise_image(7, 7, 1), noise_image(7, 7, 2)), InvalidInput);
    EXPECT_THROW(score_pair(f, noise_image(8, 8, 1), noise_image(16, 16, 2)), InvalidInput);
}

TEST(ScorePair, SymmetricAndInRange)
{
    LayeredExtractor f(ExtractorConfig::desk(16), 9);
    for (std::uint64_t s = 0; s < 6; ++s) {
        const Image a = noise_image(16, 16, 100 + s);
        const Image b = noise_image(16, 16, 200 + s);
        const double ab = score_pair(f, a, b);
        EXPECT_EQ(ab, score_pair(f, b, a));
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
    }
}

TEST(Extractor, TrainableFlagsDoNotTouchParameters)
{
    LayeredExtractor f(tiny_config(), 2);
    const std::string before = f.digest();
    f.set_trainable({0, 3});
    EXPECT_EQ(f.digest(), before);
    EXPECT_EQ(f.trainable_indices(), (std::set<int>{0, 3}));
    EXPECT_THROW(f.set_trainable({7}), InvalidInput);
    EXPECT_EQ(f.last_layers(2), (std::set<int>{3, 4}));
    EXPECT_EQ(f.last_layers(99).size(), 5u);
}

TEST(Extractor, DeskShapes)
{
    LayeredExtractor f(ExtractorConfig::desk(), 1);
    EXPECT_EQ(f.layer_count(), 12);
    EXPECT_EQ(f.embedding_dim(), 128);
    EXPECT_TRUE(f.accepts(224, 224));
    EXPECT_TRUE(f.accepts(64, 64));
    EXPECT_FALSE(f.accepts(60, 60));
    const Tensor x = to_batch(std::vector<Image>{noise_image(64, 64, 1)});
    EXPECT_EQ(f.reconstruct(x).shape(), x.shape());
    EXPECT_EQ(f.embed(noise_image(64, 64, 1)).size(), 128);
}

TEST(Extractor, ContrastiveGradientMatchesFiniteDifferences)
{
    LayeredExtractor f(smooth_config(), 4);
    f.set_all_trainable(true);
    auto pairs = toy_pairs(8, 3, 2);
    pairs.resize(3); // SIM, SIM, DISSIM_A
    std::vector<int> labels;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        labels.push_back(pairs[i].label);
        idx.push_back(i);
    }
    const Tensor x = detail::pair_batch(pairs, idx);
    auto loss = [&] {
        Tensor g;
        return detail::contrastive_step(f.features(x), labels, 1.0, 1.0, g);
    };
    f.zero_grad();
    Tensor gfeat;
    detail::contrastive_step(f.train_encode(x), labels, 1.0, 1.0, gfeat);
    f.backward_encoder(gfeat);
    const double h = 1e-2;
    for (int layer = 0; layer < f.encoder_count(); ++layer) {
        for (nn::Parameter* p : f.core(layer).parameters()) {
            for (std::size_t i = 0; i < p->value.size(); i += std::max<std::size_t>(1, p->value.size() / 7)) {
                const float orig = p->value[i];
                p->value[i] = orig + static_cast<float>(h);
                const double lp = loss();
                p->value[i] = orig - static_cast<float>(h);
                const double lm = loss();
                p->value[i] = orig;
                const double num = (lp - lm) / (2 * h);
                EXPECT_NEAR(p->grad[i], num, 1e-2 * std::max(0.05, std::abs(num))) << "layer " << layer;
            }
        }
    }
}

TEST(RunStage, EmptyTrainableSetLeavesModelBitwiseIdentical)
{
    LayeredExtractor f(tiny_config(), 1);
    const auto r = run_stage(f, tiny_plan({}, 2), toy_pairs(8, 1), 3);
    EXPECT_EQ(r.extractor.digest(), f.digest());
    EXPECT_FALSE(r.warning.empty());
    EXPECT_EQ(r.loss_history.size(), 2u);
}

TEST(RunStage, HistoryLengthEqualsEpochs)
{
    LayeredExtractor f(tiny_config(), 1);
    const auto r = run_stage(f, tiny_plan({2, 3, 4}, 3), toy_pairs(8, 1), 3);
    EXPECT_EQ(r.loss_history.size(), 3u);
    EXPECT_TRUE(r.warning.empty());
}

TEST(RunStage, OnlyTrainableLayersChange)
{
    LayeredExtractor f(tiny_config(), 1);
    const auto before = layer_digests(f);
    const std::set<int> trainable{1, 4};
    const auto r = run_stage(f, tiny_plan(trainable, 2), toy_pairs(8, 2), 3);
    const auto after = layer_digests(r.extractor);
    for (int i = 0; i < f.layer_count(); ++i) {
        if (trainable.count(i)) {
            EXPECT_NE(before[static_cast<std::size_t>(i)], after[static_cast<std::size_t>(i)]) << i;
        } else {
            EXPECT_EQ(before[static_cast<std::size_t>(i)], after[static_cast<std::size_t>(i)]) << i;
        }
    }
    EXPECT_EQ(r.frozen_digest_before, r.frozen_digest_after);
    EXPECT_EQ(r.frozen_digest_before, f.digest({0, 2, 3}));
}

TEST(RunStage, StageTwoKeepsStageOneOnlyLayers)
{
    LayeredExtractor f(tiny_config(), 8);
    const auto pairs = toy_pairs(8, 5);
    const auto r1 = run_stage(f, tiny_plan({1, 2, 3, 4}, 1), pairs, 1);
    const auto mid = layer_digests(r1.extractor);
    const auto r2 = run_stage(r1.extractor, tiny_plan({3, 4}, 1, 2), pairs, 2);
    const auto after = layer_digests(r2.extractor);
    EXPECT_EQ(mid[1], after[1]);
    EXPECT_EQ(mid[2], after[2]);
    EXPECT_NE(mid[3], after[3]);
    EXPECT_EQ(r2.frozen_digest_before, r2.frozen_digest_after);
}

TEST(RunStage, DeterministicUnderSeed)
{
    LayeredExtractor f(tiny_config(), 1);
    const auto pairs = toy_pairs(8, 6);
    const auto a = run_stage(f, tiny_plan({0, 1, 2, 3, 4}, 2), pairs, 42);
    const auto b = run_stage(f, tiny_plan({0, 1, 2, 3, 4}, 2), pairs, 42);
    EXPECT_EQ(a.extractor.digest(), b.extractor.digest());
    const auto c = run_stage(f, tiny_plan({0, 1, 2, 3, 4}, 2), pairs, 43);
    EXPECT_NE(a.extractor.digest(), c.extractor.digest());
}

TEST(RunStage, ContrastiveLossDecreasesOnToyTask)
{
    LayeredExtractor f(tiny_config(), 1);
    auto plan = tiny_plan({0, 1, 2, 3, 4}, 12);
    plan.sim_lr = 5e-3;
    const auto r = run_stage(f, plan, toy_pairs(8, 7, 8), 3);
    EXPECT_LT(r.loss_history.back().contrastive, r.loss_history.front().contrastive);
}

TEST(RunStage, Errors)
{
    LayeredExtractor f(tiny_config(), 1);
    EXPECT_THROW(run_stage(f, tiny_plan({1}, 1), {}, 0), ConfigError);
    EXPECT_THROW(run_stage(f, tiny_plan({9}, 1), toy_pairs(8, 1), 0), ConfigError);
    auto plan = tiny_plan({1}, 1);
    plan.input_h = plan.input_w = 16;
    EXPECT_THROW(run_stage(f, plan, toy_pairs(8, 1), 0), ConfigError);
}

TEST(TrainMft, RejectsNonSubsetStageTwo)
{
    LayeredExtractor f(tiny_config(), 1);
    const auto pairs = toy_pairs(8, 1);
    EXPECT_THROW(train_mft(f, tiny_plan({3, 4}, 0), tiny_plan({2, 3}, 0, 2), pairs, pairs, 0), ConfigError);
    EXPECT_THROW(train_mft(f, tiny_plan({3}, 0), tiny_plan({4}, 0, 2), pairs, pairs, 0), ConfigError);
    EXPECT_NO_THROW(train_mft(f, tiny_plan({2, 3, 4}, 0), tiny_plan({3, 4}, 0, 2), pairs, pairs, 0));
}

TEST(TrainMft, ZeroEpochStagesLeaveModelUnchanged)
{
    LayeredExtractor f(tiny_config(), 1);
    const auto pairs = toy_pairs(8, 1);
    auto [out, results] = train_mft(f, tiny_plan({1, 2, 3, 4}, 0), tiny_plan({3, 4}, 0, 2), pairs, pairs, 0);
    EXPECT_EQ(out.digest(), f.digest());
    ASSERT_EQ(results.size(), 2u);
    EXPECT_TRUE(results[0].loss_history.empty());
    EXPECT_TRUE(results[1].loss_history.empty());
}

TEST(TrainMft, DefaultsEchoedIntoResults)
{
    LayeredExtractor f(ExtractorConfig::desk(), 1);
    auto s1 = StagePlan::stage1_defaults(f);
    auto s2 = StagePlan::stage2_defaults(f);
    EXPECT_EQ(s1.trainable, (std::set<int>{4, 5, 6, 7, 8, 9, 10, 11}));
    EXPECT_EQ(s2.trainable, (std::set<int>{9, 10, 11}));
    EXPECT_EQ(s1.epochs, 10);
    EXPECT_EQ(s2.epochs, 8);
    EXPECT_EQ(s1.batch_size, 32);
    EXPECT_EQ(s1.recon_lr, 1e-3);
    EXPECT_EQ(s1.sim_lr, 5e-4);
    EXPECT_EQ(s1.input_h, 224);
    EXPECT_EQ(s2.input_h, 64);
    s1.epochs = 0;
    s2.epochs = 0;
    auto slides = toy_pairs(224, 1, 1);
    auto patches = toy_pairs(64, 1, 1);
    auto [out, results] = train_mft(f, s1, s2, slides, patches, 0);
    EXPECT_EQ(results[0].plan.to_json(), s1.to_json());
    EXPECT_EQ(results[1].plan.to_json(), s2.to_json());
    EXPECT_EQ(results[0].plan.batch_size, 32);
    EXPECT_EQ(results[1].plan.sim_lr, 5e-4);
}

TEST(Checkpoint, RoundTripAndTamperDetection)
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "simgan_test_snn_ckpt";
    fs::remove_all(dir);
    LayeredExtractor f(tiny_config(), 1);
    const auto r = run_stage(f, tiny_plan({3, 4}, 1), toy_pairs(8, 1), 7);
    save_stage(dir / "stage1", r);
    const auto g = load_extractor(dir / "stage1");
    EXPECT_EQ(g.digest(), r.extractor.digest());
    EXPECT_EQ(g.trainable_indices(), (std::set<int>{3, 4}));
    const auto manifest = read_manifest(dir / "stage1");
    EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 7u);
    EXPECT_EQ(manifest.at("frozen_param_digest").get<std::string>(), r.frozen_digest_after);
    EXPECT_EQ(StagePlan::from_json(manifest.at("plan")).to_json(), r.plan.to_json());

    nn::TensorArchive ar = nn::TensorArchive::load(dir / "stage1.bin");
    LayeredExtractor other(tiny_config(), 99);
    other.save_into(ar);
    ar.save(dir / "stage1.bin");
    EXPECT_THROW(load_extractor(dir / "stage1"), DependencyError);
    EXPECT_THROW(load_extractor(dir / "missing"), DependencyError);
    fs::remove_all(dir);
}
