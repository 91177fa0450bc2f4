#include <gtest/gtest.h>

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "simgan/xcli/commands.hpp"

using namespace simgan;
using namespace simgan::xcli;

namespace {

class TempDir {
public:
    TempDir()
    {
        static int n = 0;
        path_ = fs::temp_directory_path() / ("xcli_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// Seconds-scale experiment: 6 small slides, one epoch everywhere.
std::vector<std::string> tiny_overrides(const fs::path& out)
{
    return {"output_dir=" + nlohmann::json(out.string()).dump(),
            "corpus.n_slides=6",
            "corpus.slide_size=192",
            "corpus.wsi_pairs_per_level=4",
            "corpus.patch_pairs_per_level=8",
            "corpus.heldout_pairs_per_level=4",
            "corpus.wsi_resize=64",
            "snn.pretrain_epochs=1",
            "snn.stage1.epochs=1",
            "snn.stage1.input_resolution=[64,64]",
            "snn.stage2.epochs=1",
            "gan.epochs=2",
            "gan.batch_size=8",
            "metrics.n_real=16",
            "metrics.n_fake=16",
            "metrics.ppl_paths=4",
            "metrics.tsne_samples=8",
            "downstream.epochs=1",
            "downstream.gan_epochs=1",
            "downstream.head_units=16"};
}

ExperimentConfig tiny(const fs::path& out) { return load_config(std::nullopt, tiny_overrides(out)); }

void run_all(const ExperimentConfig& c)
{
    cmd_synth(c);
    cmd_pairs(c);
    cmd_train_snn(c);
    cmd_train_gan(c);
    cmd_eval(c);
    cmd_downstream(c);
}

nlohmann::json manifest(const fs::path& out, const std::string& cmd)
{
    std::ifstream in(out / "manifests" / (cmd + ".json"));
    return nlohmann::json::parse(in);
}

template <class F>
std::string error_of(F&& f)
{
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(XcliConfig, DefaultsValidateAndRoundTrip)
{
    const ExperimentConfig c = default_config();
    EXPECT_NO_THROW(c.validate());
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.hash(), c.hash());
    EXPECT_EQ(c.hash().size(), 64u);
}

TEST(XcliConfig, HashTracksSubstanceNotLocation)
{
    ExperimentConfig a = default_config();
    ExperimentConfig b = a;
    b.output_dir = "elsewhere";
    EXPECT_EQ(a.hash(), b.hash());
    b.gan.reward_weight = 0.0;
    EXPECT_NE(a.hash(), b.hash());
}

TEST(XcliConfig, DottedOverrides)
{
    const auto c = load_config(std::nullopt, {"gan.reward_weight=0", "snn.extractor=desk", "corpus.aug.noise_sigma=0.01",
                                              "snn.stage2.epochs=2", "serve.host=0.0.0.0"});
    EXPECT_EQ(c.gan.reward_weight, 0.0);
    EXPECT_EQ(c.corpus.aug.noise_sigma, 0.01);
    EXPECT_EQ(c.snn.stage2.epochs, 2);
    EXPECT_EQ(c.serve.host, "0.0.0.0");
    EXPECT_EQ(c.snn.stage2.trainable, default_config().snn.stage2.trainable);
}

TEST(XcliConfig, UnknownOrMistypedKeysAreConfigErrors)
{
    EXPECT_THROW(load_config(std::nullopt, {"gan.rewardweight=0"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"nope=1"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"gan.epochs=many"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"gan.epochs"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"gan.reward_weight=-1"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"snn.stage2.input_resolution=[32,32]"}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"serve.runs_dir=\"/tmp/x\""}), ConfigError);
    EXPECT_THROW(load_config(std::nullopt, {"serve.index_dir=\"../x\""}), ConfigError);
}

TEST(XcliConfig, FileIsSchemaChecked)
{
    TempDir t;
    const fs::path good = t.path() / "good.json";
    std::ofstream(good) << R"({"gan": {"epochs": 3}, "corpus": {"seed": 9}})";
    const auto c = load_config(good, {"gan.epochs=4"});
    EXPECT_EQ(c.gan.epochs, 4);
    EXPECT_EQ(c.corpus.seed, 9u);
    const fs::path bad = t.path() / "bad.json";
    std::ofstream(bad) << R"({"gan": {"epoch": 3}})";
    EXPECT_THROW(load_config(bad, {}), ConfigError);
    const fs::path broken = t.path() / "broken.json";
    std::ofstream(broken) << "{";
    EXPECT_THROW(load_config(broken, {}), ConfigError);
    EXPECT_THROW(load_config(t.path() / "absent.json", {}), ConfigError);
}

TEST(XcliConfig, SeedFlagSetsEverySection)
{
    ExperimentConfig c = default_config();
    set_all_seeds(c, 42);
    EXPECT_EQ(c.corpus.seed, 42u);
    EXPECT_EQ(c.snn.seed, 42u);
    EXPECT_EQ(c.gan.seed, 42u);
    EXPECT_EQ(c.metrics.seed, 42u);
    EXPECT_EQ(c.downstream.cls.seed, 42u);
}

TEST(XcliConfig, SchemaCoversEveryKey)
{
    const auto s = config_schema();
    EXPECT_EQ(s.at("additionalProperties"), false);
    const auto d = default_config().to_json();
    for (auto it = d.begin(); it != d.end(); ++it) {
        EXPECT_TRUE(s.at("properties").contains(it.key())) << it.key();
    }
    EXPECT_EQ(s.at("properties").at("gan").at("properties").at("reward_weight").at("default"), 0.3);
}

TEST(XcliCommands, EvalWithoutGanNamesTrainGan)
{
    TempDir t;
    const auto c = tiny(t.path());
    const std::string msg = error_of([&] { cmd_eval(c); });
    EXPECT_NE(msg.find("train-gan"), std::string::npos) << msg;
    EXPECT_THROW(cmd_eval(c), DependencyError);
}

TEST(XcliCommands, MissingUpstreamNamesProducer)
{
    TempDir t;
    const auto c = tiny(t.path());
    EXPECT_NE(error_of([&] { cmd_pairs(c); }).find("synth"), std::string::npos);
    EXPECT_NE(error_of([&] { cmd_train_snn(c); }).find("pairs"), std::string::npos);
    EXPECT_NE(error_of([&] { cmd_train_gan(c); }).find("train-snn"), std::string::npos);
    EXPECT_NE(error_of([&] { cmd_downstream(c); }).find("train-snn"), std::string::npos);
}

TEST(XcliCommands, ExitCodes)
{
    auto code = [](auto&& thrower) {
        try {
            thrower();
        } catch (...) {
            return exit_code_for(std::current_exception());
        }
        return 0;
    };
    EXPECT_EQ(code([] { throw ConfigError("x"); }), 2);
    EXPECT_EQ(code([] { throw ValidationError("x"); }), 2);
    EXPECT_EQ(code([] { throw DependencyError("x"); }), 3);
    EXPECT_EQ(code([] { throw NumericDomainError("x"); }), 4);
    EXPECT_EQ(code([] { throw std::runtime_error("x"); }), 1);
}

TEST(XcliCommands, EndToEndDeterministicAndContained)
{
    TempDir t;
    const auto a = tiny(t.path() / "a");
    const auto b = tiny(t.path() / "b");
    run_all(a);
    run_all(b);
    for (const char* cmd : {"synth", "pairs", "train-snn", "train-gan", "eval", "downstream"}) {
        const auto ma = manifest(t.path() / "a", cmd);
        const auto mb = manifest(t.path() / "b", cmd);
        EXPECT_EQ(ma.at("config_hash"), a.hash());
        EXPECT_FALSE(ma.at("artifacts").empty()) << cmd;
        EXPECT_EQ(ma.at("artifacts"), mb.at("artifacts")) << cmd;
        EXPECT_EQ(ma.at("seeds").at("gan"), a.gan.seed);
        for (auto it = ma.at("artifacts").begin(); it != ma.at("artifacts").end(); ++it) {
            EXPECT_EQ(sha256_file(t.path() / "a" / it.key()), it.value().get<std::string>()) << it.key();
        }
    }
    std::vector<std::string> top;
    for (const auto& e : fs::directory_iterator(t.path())) {
        top.push_back(e.path().filename().string());
    }
    std::sort(top.begin(), top.end());
    EXPECT_EQ(top, (std::vector<std::string>{"a", "b"}));
    EXPECT_TRUE(fs::exists(t.path() / "a" / "runs" / "gan" / "rewards.csv"));
    EXPECT_TRUE(fs::exists(t.path() / "a" / "runs" / "gan" / "tsne.csv"));
}

TEST(XcliCommands, RewardWeightOverrideReachesManifest)
{
    TempDir t;
    auto ov = tiny_overrides(t.path());
    ov.push_back("gan.reward_weight=0");
    const auto c = load_config(std::nullopt, ov);
    cmd_synth(c);
    cmd_pairs(c);
    cmd_train_snn(c);
    cmd_train_gan(c);
    const auto m = manifest(t.path(), "train-gan");
    EXPECT_EQ(m.at("config").at("gan").at("reward_weight").get<double>(), 0.0);
    EXPECT_EQ(m.at("summary").at("reward_weight").get<double>(), 0.0);
    const auto trace = gan::RewardTrace::read_csv(t.path() / "runs" / "gan" / "rewards.csv");
    ASSERT_FALSE(trace.records.empty());
    for (const auto& r : trace.records) {
        EXPECT_EQ(r.reward, 0.0);
    }
}

TEST(XcliCommands, ServeExposesRunsAndSamples)
{
    TempDir t;
    auto ov = tiny_overrides(t.path());
    ov.push_back("serve.port=0");
    const auto c = load_config(std::nullopt, ov);
    cmd_synth(c);
    cmd_pairs(c);
    cmd_train_snn(c);
    cmd_train_gan(c);
    cmd_serve(c, [&](simsvc::Service& svc) {
        std::thread th([&] { svc.listen(); });
        svc.http().wait_until_ready();
        httplib::Client cli("127.0.0.1", svc.port());
        const auto idx = cli.Get("/indexes");
        ASSERT_TRUE(idx);
        const auto ij = nlohmann::json::parse(idx->body);
        ASSERT_EQ(ij.size(), 1u);
        EXPECT_EQ(ij[0].at("index_id"), "gan-samples");
        EXPECT_EQ(ij[0].at("entries"), 16);
        const auto rw = cli.Get("/runs/gan/rewards");
        ASSERT_TRUE(rw);
        EXPECT_EQ(rw->status, 200);
        const auto trace = gan::RewardTrace::read_csv(t.path() / "runs" / "gan" / "rewards.csv");
        EXPECT_EQ(nlohmann::json::parse(rw->body), trace.to_json());
        svc.stop();
        th.join();
    });
    EXPECT_TRUE(fs::exists(t.path() / "indexes"));
}
