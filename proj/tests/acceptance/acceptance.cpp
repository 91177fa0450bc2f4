// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Optional arguments run a subset by name.
#include <Eigen/Eigenvalues>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simgan/gan/losses.hpp"
#include "simgan/metrics/fid.hpp"
#include "simgan/metrics/kid.hpp"
#include "simgan/metrics/ppl.hpp"
#include "simgan/nn/archive.hpp"
#include "simgan/snn/losses.hpp"
#include "simgan/xcli/commands.hpp"

using namespace simgan;
using namespace simgan::xcli;

namespace {

using clk = std::chrono::steady_clock;

double since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

template <class... A>
std::string fmt(const char* f, A... args)
{
    char buf[1024];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

ExperimentConfig desk_config(std::uint64_t seed)
{
    ExperimentConfig c = default_config();
    set_all_seeds(c, seed);
    return c;
}

// Desk corpus + similarity network per seed, shared by the criteria that need it.
struct SeedRun {
    std::vector<corpus::Patch> patches;
    PairSets pairs;
    std::optional<SnnRun> snn;
    double seconds = 0.0;
};

SeedRun& desk_snn(std::uint64_t seed)
{
    static std::map<std::uint64_t, SeedRun> runs;
    SeedRun& r = runs[seed];
    if (r.snn) {
        return r;
    }
    const auto t = clk::now();
    const ExperimentConfig c = desk_config(seed);
    const auto slides = make_slides(c.corpus);
    r.patches = make_patches(slides, c.corpus);
    const auto split = split_holdout(r.patches, c.corpus);
    r.pairs = make_pairs(slides, split, c.corpus);
    r.snn = train_snn(c.snn, split.train, r.pairs);
    r.seconds = since(t);
    return r;
}

std::vector<Image> noise_images(int n, int size, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) {
        Image img(size, size);
        for (float& v : img.pixels()) {
            v = static_cast<float>(uniform(rng, 0.0, 1.0));
        }
        out.push_back(std::move(img));
    }
    return out;
}

bool rel_close(double ana, double num, double tol)
{
    if (num == 0.0) {
        return std::abs(ana) <= 1e-12;
    }
    return std::abs(ana - num) <= tol * std::abs(num);
}

// ---------------------------------------------------------------------------

Outcome loss_identity()
{
    const auto t = clk::now();
    const bool unit = gan::compute_reward(std::vector<double>{1.0, 1.0, 1.0, 1.0}, 0.3) == 0.3;
    const snn::LayeredExtractor scorer(snn::ExtractorConfig::desk(), 1);
    gan::GanConfig cfg = gan::GanConfig::desk();
    cfg.batch_size = 8;
    cfg.seed = 5;
    const auto data = noise_images(16, 32, 5);
    auto [g, d] = gan::make_models(cfg);
    const auto run = gan::train(std::move(g), std::move(d), gan::Scorer{&scorer, 64}, data, cfg, std::nullopt, 4);
    long bad = 0;
    for (const auto& rec : run.trace.records) {
        const bool identity = rec.l_d_mod == rec.l_d - rec.reward;
        const bool weighted = rec.reward == 0.3 * rec.mean_sim && rec.mean_sim >= 0.0 && rec.mean_sim <= 1.0;
        bad += identity && weighted ? 0 : 1;
    }
    const bool pass = unit && bad == 0 && run.trace.records.size() == 4;
    return {pass && since(t) < 1.0, fmt("%zu trace rows, %ld violations, unit-score reward %s", run.trace.records.size(),
                                        bad, unit ? "0.3" : "wrong")};
}

Outcome baseline_reduction()
{
    const snn::LayeredExtractor scorer(snn::ExtractorConfig::desk(), 1);
    gan::GanConfig cfg = gan::GanConfig::desk();
    cfg.reward_weight = 0.0;
    cfg.seed = 11;
    const auto data = noise_images(cfg.batch_size * 2, cfg.image_size, 11);
    auto [g, d] = gan::make_models(cfg);
    const std::string init = nn::digest_module(g.net);
    const auto with = gan::train(g, d, gan::Scorer{&scorer, 64}, data, cfg, std::nullopt, 5);
    const auto base = gan::train_baseline(g, d, data, cfg, std::nullopt, 5);
    const bool same_g = nn::digest_module(with.gen.net) == nn::digest_module(base.gen.net);
    const bool same_d = nn::digest_module(with.disc.net) == nn::digest_module(base.disc.net);
    const bool moved = nn::digest_module(with.gen.net) != init;
    return {same_g && same_d && moved && with.trace.records.size() == 5,
            fmt("5 iterations: generator %s, discriminator %s, parameters %s", same_g ? "identical" : "DIFFERENT",
                same_d ? "identical" : "DIFFERENT", moved ? "updated" : "NOT updated")};
}

std::set<int> complement(const std::set<int>& s, int n)
{
    std::set<int> out;
    for (int i = 0; i < n; ++i) {
        if (!s.contains(i)) {
            out.insert(i);
        }
    }
    return out;
}

Outcome freeze_semantics()
{
    const SeedRun& r = desk_snn(1);
    const auto& run = *r.snn;
    const auto& s1 = run.stages.at(0);
    const auto& s2 = run.stages.at(1);
    const int n = run.extractor.layer_count();
    const auto frozen1 = complement(s1.plan.trainable, n);
    const auto frozen2 = complement(s2.plan.trainable, n);
    // recorded digests, plus a direct comparison of the frozen layers
    const bool rec = s1.frozen_digest_before == s1.frozen_digest_after
                     && s2.frozen_digest_before == s2.frozen_digest_after;
    const bool direct1 = s1.extractor.digest(frozen1) == run.initial.digest(frozen1);
    const bool direct2 = s2.extractor.digest(frozen2) == s1.extractor.digest(frozen2);
    const bool trained = s1.extractor.digest(s1.plan.trainable) != run.initial.digest(s1.plan.trainable)
                         && s2.extractor.digest(s2.plan.trainable) != s1.extractor.digest(s2.plan.trainable);
    bool enforced = false;
    {
        snn::StagePlan wide = s2.plan;
        wide.trainable.insert(*frozen1.begin());
        try {
            snn::train_mft(run.initial, s1.plan, wide, r.pairs.wsi, r.pairs.patch, 1);
        } catch (const ConfigError&) {
            enforced = true;
        }
    }
    const bool pass = rec && direct1 && direct2 && trained && enforced && !frozen1.empty();
    return {pass && r.seconds < 600.0,
            fmt("stage1 frozen %zu layers %s, stage2 frozen %zu layers %s, subset rule %s (seed-1 training %.0f s)",
                frozen1.size(), direct1 && rec ? "unchanged" : "CHANGED", frozen2.size(),
                direct2 && rec ? "unchanged" : "CHANGED", enforced ? "enforced" : "NOT enforced", r.seconds)};
}

Outcome separation_check()
{
    int good = 0;
    double total = 0.0;
    std::string detail;
    for (auto seed : kSeeds) {
        SeedRun& r = desk_snn(seed);
        const auto t = clk::now();
        const Separation s = separation(r.snn->extractor, r.pairs.heldout);
        total += r.seconds + since(t);
        const bool ok = s.gap >= 0.15 && s.ordered();
        good += ok ? 1 : 0;
        detail += fmt("seed %llu: SIM %.3f A %.3f B %.3f gap %.3f%s; ", static_cast<unsigned long long>(seed), s.sim,
                      s.dissim_a, s.dissim_b, s.gap, ok ? "" : " (miss)");
    }
    detail += fmt("%d/3 seeds, %.0f s", good, total);
    return {good >= 2 && total < 900.0, detail};
}

Outcome reward_trend()
{
    int good = 0;
    double total = 0.0;
    std::string detail;
    for (auto seed : kSeeds) {
        SeedRun& r = desk_snn(seed);
        const ExperimentConfig c = desk_config(seed);
        const auto t = clk::now();
        const auto res = train_gan(gan_images(r.patches, c.gan), r.snn->extractor, scorer_size(c), c.gan);
        total += since(t);
        const double rho = reward_spearman(res.trace);
        good += rho > 0.5 ? 1 : 0;
        detail += fmt("seed %llu: rho %.3f over %d epochs; ", static_cast<unsigned long long>(seed), rho, c.gan.epochs);
    }
    detail += fmt("%d/3 seeds, %.0f s of GAN training", good, total);
    return {good >= 2 && total <= 3600.0 && desk_config(1).gan.epochs >= 30, detail};
}

Eigen::MatrixXd gaussian(int n, int d, std::uint64_t seed, double shift = 0.0)
{
    Rng rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            x(i, j) = shift + nd(rng);
        }
    }
    return x;
}

Outcome metrics_oracles()
{
    const auto t = clk::now();
    std::vector<std::string> fails;
    using namespace metrics;

    const FeatureStats a = feature_stats(gaussian(200, 16, 1));
    if (std::abs(fid(a, a)) > 1e-6) {
        fails.push_back("fid(a,a)");
    }

    FeatureStats p;
    FeatureStats q;
    p.mu = Eigen::Vector3d(0, 0, 0);
    q.mu = Eigen::Vector3d(2, 1, 2); // |mu|^2 = 9
    p.sigma = q.sigma = Eigen::Matrix3d::Identity();
    p.n = q.n = 100;
    if (std::abs(fid(p, q) - 9.0) > 1e-8) {
        fails.push_back("gaussian case");
    }

    const Eigen::MatrixXd g = gaussian(10, 10, 3);
    const Eigen::MatrixXd psd = g * g.transpose();
    Eigen::EigenSolver<Eigen::MatrixXd> es(psd);
    Eigen::VectorXcd root = es.eigenvalues();
    for (Eigen::Index i = 0; i < root.size(); ++i) {
        root(i) = std::sqrt(std::complex<double>(std::max(0.0, root(i).real()), 0.0));
    }
    const Eigen::MatrixXd oracle = (es.eigenvectors() * root.asDiagonal() * es.eigenvectors().inverse()).real();
    const double sqrt_err = (matrix_sqrt(psd) - oracle).norm() / oracle.norm();
    if (sqrt_err > 1e-8) {
        fails.push_back("matrix_sqrt");
    }

    Eigen::MatrixXd kx(2, 2);
    Eigen::MatrixXd ky(2, 2);
    kx << 1, 0, 1, 0;
    ky << 0, 1, 0, 1;
    if (std::abs(kid(kx, ky) - 4.75) > 1e-10) {
        fails.push_back("kid hand case");
    }

    // X against a fresh draw from the same distribution, judged against bootstrap spread.
    const Eigen::MatrixXd x = gaussian(150, 8, 21);
    const Eigen::MatrixXd y = gaussian(150, 8, 22);
    const double v = kid(x, y);
    Rng rng(7);
    std::vector<double> boot;
    for (int b = 0; b < 60; ++b) {
        Eigen::MatrixXd bx(x.rows(), x.cols());
        Eigen::MatrixXd by(y.rows(), y.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            bx.row(i) = x.row(uniform_int(rng, 0, static_cast<int>(x.rows()) - 1));
            by.row(i) = y.row(uniform_int(rng, 0, static_cast<int>(y.rows()) - 1));
        }
        boot.push_back(kid(bx, by));
    }
    const double mean = std::accumulate(boot.begin(), boot.end(), 0.0) / static_cast<double>(boot.size());
    double var = 0.0;
    for (double b : boot) {
        var += (b - mean) * (b - mean);
    }
    const double sigma = std::sqrt(var / static_cast<double>(boot.size() - 1));
    if (!(std::abs(v) <= 3.0 * sigma)) {
        fails.push_back("kid resample");
    }

    auto constant = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(4, 0.7).eval(); };
    auto identity = [](const Eigen::VectorXd& e) { return e; };
    if (ppl(constant, identity, 6, PplParams{}, 1) != 0.0) {
        fails.push_back("ppl constant");
    }

    std::string detail = fmt("fid(a,a) %.2e, gaussian %.10f, sqrt rel err %.2e, kid hand %.12f, kid %.2e vs 3 sigma %.2e",
                             fid(a, a), fid(p, q), sqrt_err, kid(kx, ky), v, 3.0 * sigma);
    for (const auto& f : fails) {
        detail += "; FAILED " + f;
    }
    return {fails.empty() && since(t) < 60.0, detail};
}

Outcome gradient_checks()
{
    const auto t = clk::now();
    const double h = 1e-6;
    const double tol = 1e-5;
    int checked = 0;
    int bad = 0;
    auto check = [&](double ana, double num) {
        ++checked;
        bad += rel_close(ana, num, tol) ? 0 : 1;
    };
    for (double d : {0.1, 0.5, 0.9, 1.5}) {
        for (int y : {0, 1}) {
            const double num = (snn::contrastive_loss(d + h, y, 1.0) - snn::contrastive_loss(d - h, y, 1.0)) / (2 * h);
            check(snn::contrastive_loss_grad(d, y, 1.0), num);
        }
    }
    const std::vector<double> other_fake{0.2};
    const std::vector<double> other_real{0.8};
    for (double p : {0.1, 0.5, 0.9}) {
        for (double target : {1.0, 0.9}) {
            auto f = [&](double v) { return gan::d_loss(std::vector<double>{v}, other_fake, target).total; };
            check(gan::bce_mean_grad(std::vector<double>{p}, target)[0], (f(p + h) - f(p - h)) / (2 * h));
        }
        auto fd = [&](double v) { return gan::d_loss(other_real, std::vector<double>{v}).total; };
        check(gan::bce_mean_grad(std::vector<double>{p}, 0.0)[0], (fd(p + h) - fd(p - h)) / (2 * h));
        auto gl = [&](double v) { return gan::g_loss(std::vector<double>{v}); };
        check(gan::g_loss_grad(std::vector<double>{p})[0], (gl(p + h) - gl(p - h)) / (2 * h));
    }
    return {bad == 0 && since(t) < 1.0, fmt("%d probe points, %d outside 1e-5 relative", checked, bad)};
}

Outcome downstream_harness()
{
    SeedRun& r = desk_snn(1);
    const ExperimentConfig c = desk_config(1);
    const auto t = clk::now();
    const DownstreamRun run = run_downstream(r.patches, r.snn->extractor, scorer_size(c), c.downstream, c.gan);
    const double secs = since(t);
    double worst = 0.0;
    for (const auto* rep : {&run.synthetic, &run.real}) {
        double acc = 0.0;
        long n = 0;
        for (const auto& [name, count] : rep->class_counts) {
            acc += rep->per_class.at(name) * static_cast<double>(count);
            n += count;
        }
        worst = std::max(worst, std::abs(acc / static_cast<double>(n) - rep->overall));
    }
    const double gap = std::abs(run.gap_points());
    return {gap <= 15.0 && worst <= 1e-12 && secs < 600.0,
            fmt("synthetic %.4f vs real %.4f (%.1f points), recombination error %.1e, %zu test patches, %.0f s",
                run.synthetic.overall, run.real.overall, gap, worst, run.n_test, secs)};
}

// Full default corpus and metric sample sizes; one epoch per training stage.
ExperimentConfig determinism_config(const fs::path& out)
{
    return load_config(std::nullopt, {"output_dir=" + nlohmann::json(out.string()).dump(), "snn.pretrain_epochs=1",
                                      "snn.stage1.epochs=1", "snn.stage2.epochs=1", "gan.epochs=2",
                                      "downstream.epochs=1", "downstream.gan_epochs=1"});
}

Outcome determinism()
{
    const fs::path root = fs::temp_directory_path() / ("simgan_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::vector<std::string> cmds{"synth", "pairs", "train-snn", "train-gan", "eval", "downstream"};
    std::map<std::string, nlohmann::json> first;
    std::size_t files = 0;
    int mismatched = 0;
    for (const char* side : {"a", "b"}) {
        const auto c = determinism_config(root / side);
        cmd_synth(c);
        cmd_pairs(c);
        cmd_train_snn(c);
        cmd_train_gan(c);
        cmd_eval(c);
        cmd_downstream(c);
        for (const auto& cmd : cmds) {
            std::ifstream in(root / side / "manifests" / (cmd + ".json"));
            const auto m = nlohmann::json::parse(in);
            if (std::string(side) == "a") {
                first[cmd] = m.at("artifacts");
                files += m.at("artifacts").size();
            } else if (first[cmd] != m.at("artifacts") || first[cmd].empty()) {
                ++mismatched;
            }
        }
    }
    fs::remove_all(root);
    return {mismatched == 0 && files > 0,
            fmt("%zu artifact digests across %zu commands, %d commands differ", files, cmds.size(), mismatched)};
}

struct Criterion {
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv)
{
    log::quiet() = true;
    const std::vector<Criterion> all = {
        {"loss-identity", loss_identity},       {"baseline-reduction", baseline_reduction},
        {"freeze-semantics", freeze_semantics}, {"separation", separation_check},
        {"reward-trend", reward_trend},         {"metrics-oracles", metrics_oracles},
        {"gradient-checks", gradient_checks},   {"downstream-harness", downstream_harness},
        {"determinism", determinism},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.contains(c.name)) {
            continue;
        }
        const auto t = clk::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), since(t));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
