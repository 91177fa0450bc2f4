#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/digest.hpp"
#include "simgan/core/error.hpp"
#include "simgan/core/log.hpp"
#include "simgan/core/png_io.hpp"
#include "simgan/corpus/layout.hpp"
#include "simgan/metrics/fid.hpp"
#include "simgan/metrics/report.hpp"
#include "simgan/metrics/tsne.hpp"
#include "simgan/simsvc/server.hpp"
#include "simgan/snn/checkpoint.hpp"
#include "simgan/xcli/config.hpp"
#include "simgan/xcli/pipeline.hpp"

// Artifact layout under output_dir:
//   corpus/slides, corpus/patches          synth
//   corpus/pairs/{wsi,patch,heldout}.jsonl pairs
//   snn/stage{1,2}.{bin,json}, snn/separation.json          train-snn
//   gan/checkpoints, gan/samples, gan/summary.json,
//   <runs_dir>/gan/rewards.csv                              train-gan
//   metrics/report.json, <runs_dir>/gan/tsne.csv            eval
//   downstream/report.json                                  downstream
//   <index_dir>/                                            serve
//   manifests/<command>.json                                every command
namespace simgan::xcli {

inline constexpr const char* kGanRun = "gan";

struct Layout {
    fs::path root;
    fs::path runs_dir;
    fs::path index_dir;

    explicit Layout(const ExperimentConfig& c)
        : root(c.output_dir), runs_dir(root / c.serve.runs_dir), index_dir(root / c.serve.index_dir)
    {
    }

    [[nodiscard]] fs::path corpus() const { return root / "corpus"; }
    [[nodiscard]] fs::path pairs(const std::string& kind) const { return corpus() / "pairs" / (kind + ".jsonl"); }
    [[nodiscard]] fs::path snn_stage(int s) const { return root / "snn" / ("stage" + std::to_string(s)); }
    [[nodiscard]] fs::path gan() const { return root / "gan"; }
    [[nodiscard]] fs::path run() const { return runs_dir / kGanRun; }
    [[nodiscard]] fs::path manifest(const std::string& cmd) const { return root / "manifests" / (cmd + ".json"); }
};

inline std::string timestamp()
{
    return simsvc::utc_now();
}

inline void write_json(const fs::path& path, const nlohmann::json& j)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DependencyError("cannot write " + path.string());
    }
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const fs::path& path, const std::string& producer)
{
    std::ifstream in(path);
    if (!in) {
        throw DependencyError("missing " + path.string() + "; run `simgan " + producer + "` first");
    }
    return nlohmann::json::parse(in);
}

inline void require(const fs::path& path, const std::string& producer)
{
    if (!fs::exists(path)) {
        throw DependencyError("missing " + path.string() + "; run `simgan " + producer + "` first");
    }
}

/// relpath -> sha256 for every regular file below `dirs` (relative to root).
inline std::map<std::string, std::string> digest_tree(const fs::path& root, const std::vector<fs::path>& paths)
{
    std::map<std::string, std::string> out;
    for (const auto& p : paths) {
        const fs::path abs = root / p;
        if (fs::is_regular_file(abs)) {
            out[fs::relative(abs, root).generic_string()] = sha256_file(abs);
        } else if (fs::is_directory(abs)) {
            for (const auto& e : fs::recursive_directory_iterator(abs)) {
                if (e.is_regular_file()) {
                    out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
                }
            }
        }
    }
    return out;
}

struct RunManifest {
    std::string command;
    std::string started_at;
    std::string finished_at;
    std::map<std::string, std::string> artifacts;
    nlohmann::json summary = nlohmann::json::object();
};

inline nlohmann::json manifest_json(const ExperimentConfig& c, const RunManifest& m)
{
    return {{"command", m.command},
            {"config_hash", c.hash()},
            {"config", c.to_json()},
            {"seeds",
             {{"corpus", c.corpus.seed},
              {"snn", c.snn.seed},
              {"gan", c.gan.seed},
              {"metrics", c.metrics.seed},
              {"downstream", c.downstream.cls.seed}}},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at},
            {"artifacts", m.artifacts},
            {"summary", m.summary}};
}

/// Runs `body`, then digests `outputs` and writes manifests/<cmd>.json.
inline nlohmann::json run_command(const ExperimentConfig& c, const std::string& cmd,
                                  const std::vector<fs::path>& outputs,
                                  const std::function<nlohmann::json()>& body)
{
    const Layout L(c);
    RunManifest m;
    m.command = cmd;
    m.started_at = timestamp();
    fs::create_directories(L.root);
    log::info(cmd + ": config " + c.hash().substr(0, 12) + ", output " + L.root.string());
    m.summary = body();
    m.finished_at = timestamp();
    m.artifacts = digest_tree(L.root, outputs);
    const auto j = manifest_json(c, m);
    write_json(L.manifest(cmd), j);
    return j;
}

inline std::vector<corpus::Patch> load_corpus_patches(const Layout& L)
{
    require(L.corpus() / "patches" / "index.json", "synth");
    return corpus::read_patches(L.corpus());
}

inline snn::LayeredExtractor load_scorer(const Layout& L)
{
    fs::path js = L.snn_stage(2);
    js += ".json";
    require(js, "train-snn");
    return snn::load_extractor(L.snn_stage(2));
}

inline int scorer_size(const ExperimentConfig& c) { return c.snn.stage2.input_h; }

inline nlohmann::json cmd_synth(const ExperimentConfig& c)
{
    const Layout L(c);
    return run_command(c, "synth", {"corpus/slides", "corpus/patches"}, [&] {
        fs::remove_all(L.corpus() / "slides");
        fs::remove_all(L.corpus() / "patches");
        const auto slides = make_slides(c.corpus);
        const auto patches = make_patches(slides, c.corpus);
        corpus::write_slides(L.corpus(), slides);
        corpus::write_patches(L.corpus(), patches, patch_config(c.corpus));
        log::info("synth: " + std::to_string(slides.size()) + " slides, " + std::to_string(patches.size())
                  + " patches");
        return nlohmann::json{{"slides", slides.size()}, {"patches", patches.size()}};
    });
}

inline nlohmann::json cmd_pairs(const ExperimentConfig& c)
{
    const Layout L(c);
    return run_command(c, "pairs", {"corpus/pairs"}, [&] {
        const auto patches = load_corpus_patches(L);
        const auto slides = corpus::read_slides(L.corpus());
        const auto split = split_holdout(patches, c.corpus);
        const auto p = make_pairs(slides, split, c.corpus);
        fs::remove_all(L.corpus() / "pairs");
        corpus::write_pair_manifest(L.pairs("wsi"), p.wsi, c.corpus.wsi_resize);
        corpus::write_pair_manifest(L.pairs("patch"), p.patch);
        corpus::write_pair_manifest(L.pairs("heldout"), p.heldout);
        nlohmann::json held = nlohmann::json::array();
        for (const auto& h : split.heldout) {
            held.push_back(corpus::patch_relpath(h).generic_string());
        }
        write_json(L.corpus() / "pairs" / "heldout_patches.json", held);
        return nlohmann::json{{"wsi_pairs", p.wsi.size()},
                              {"patch_pairs", p.patch.size()},
                              {"heldout_pairs", p.heldout.size()},
                              {"train_patches", split.train.size()},
                              {"heldout_patches", split.heldout.size()}};
    });
}

inline nlohmann::json cmd_train_snn(const ExperimentConfig& c)
{
    const Layout L(c);
    return run_command(c, "train-snn", {"snn"}, [&] {
        for (const char* k : {"wsi", "patch", "heldout"}) {
            require(L.pairs(k), "pairs");
        }
        PairSets p;
        p.wsi = corpus::read_pair_manifest(L.pairs("wsi"), L.corpus(), c.corpus.aug);
        p.patch = corpus::read_pair_manifest(L.pairs("patch"), L.corpus(), c.corpus.aug);
        p.heldout = corpus::read_pair_manifest(L.pairs("heldout"), L.corpus(), c.corpus.aug);
        const auto held_list = read_json(L.corpus() / "pairs" / "heldout_patches.json", "pairs");
        std::set<std::string> held(held_list.begin(), held_list.end());
        std::vector<corpus::Patch> train;
        for (auto& patch : load_corpus_patches(L)) {
            if (!held.contains(corpus::patch_relpath(patch).generic_string())) {
                train.push_back(std::move(patch));
            }
        }
        log::info("train-snn: " + std::to_string(p.wsi.size()) + " slide pairs, " + std::to_string(p.patch.size())
                  + " patch pairs");
        const SnnRun run = train_snn(c.snn, train, p);
        fs::remove_all(L.root / "snn");
        fs::create_directories(L.root / "snn");
        snn::save_stage(L.snn_stage(1), run.stages.at(0));
        snn::save_stage(L.snn_stage(2), run.stages.at(1));
        const Separation sep = separation(run.extractor, p.heldout);
        nlohmann::json j = sep.to_json();
        j["pretrain_history"] = run.pretrain_history;
        for (int s = 0; s < 2; ++s) {
            const auto& r = run.stages[static_cast<std::size_t>(s)];
            j["stage" + std::to_string(s + 1) + "_frozen_unchanged"] = r.frozen_digest_before == r.frozen_digest_after;
        }
        write_json(L.root / "snn" / "separation.json", j);
        log::info("train-snn: held-out SIM " + std::to_string(sep.sim) + ", DISSIM_A " + std::to_string(sep.dissim_a)
                  + ", DISSIM_B " + std::to_string(sep.dissim_b));
        return j;
    });
}

inline fs::path final_gan_checkpoint(const Layout& L)
{
    const auto s = read_json(L.gan() / "summary.json", "train-gan");
    const fs::path stem = L.root / s.at("final_checkpoint").get<std::string>();
    fs::path js = stem;
    js += ".json";
    require(js, "train-gan");
    return stem;
}

inline nlohmann::json cmd_train_gan(const ExperimentConfig& c)
{
    const Layout L(c);
    const fs::path rewards = L.run() / simsvc::kRewardsFile;
    return run_command(c, "train-gan", {"gan", c.serve.runs_dir / kGanRun / simsvc::kRewardsFile}, [&] {
        const auto f = load_scorer(L);
        const auto data = gan_images(load_corpus_patches(L), c.gan);
        log::info("train-gan: " + std::to_string(data.size()) + " images, " + std::to_string(c.gan.epochs)
                  + " epochs, reward_weight " + std::to_string(c.gan.reward_weight));
        fs::remove_all(L.gan());
        const auto r = train_gan(data, f, scorer_size(c), c.gan, L.gan() / "checkpoints");
        r.trace.write_csv(rewards);
        const auto samples = gan::sample(r.gen, 16, derive_seed(c.gan.seed, "preview"));
        for (std::size_t i = 0; i < samples.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "sample_%02zu.png", i);
            write_png(L.gan() / "samples" / name, samples[i]);
        }
        const double rho = reward_spearman(r.trace);
        nlohmann::json j = {{"final_checkpoint", fs::relative(r.checkpoints.back(), L.root).generic_string()},
                            {"iterations", r.trace.records.size()},
                            {"reward_spearman", rho},
                            {"reward_weight", c.gan.reward_weight}};
        write_json(L.gan() / "summary.json", j);
        log::info("train-gan: Spearman(epoch, reward) " + std::to_string(rho));
        return j;
    });
}

inline nlohmann::json cmd_eval(const ExperimentConfig& c)
{
    const Layout L(c);
    const fs::path tsne = L.run() / simsvc::kTsneFile;
    return run_command(c, "eval", {"metrics", c.serve.runs_dir / kGanRun / simsvc::kTsneFile}, [&] {
        const fs::path stem = final_gan_checkpoint(L);
        const auto f = load_scorer(L);
        const auto gen = gan::load_gan_checkpoint(stem).first;
        std::vector<Image> real;
        for (auto& p : load_corpus_patches(L)) {
            real.push_back(std::move(p.pixels));
        }
        const auto report = metrics::evaluate(real, gen, f, c.metrics.eval, c.metrics.seed);
        write_json(L.root / "metrics" / "report.json", report.to_json());

        const int n = c.metrics.tsne_samples;
        const auto real_pick = corpus::subsample(load_corpus_patches(L), static_cast<std::size_t>(n),
                                                 derive_seed(c.metrics.seed, "tsne-real"));
        std::vector<Image> ri;
        for (const auto& p : real_pick) {
            ri.push_back(p.pixels);
        }
        const int sz = scorer_size(c);
        const auto fi = metrics::resized(gan::sample(gen, n, derive_seed(c.metrics.seed, "tsne-fake")), sz);
        const auto pts = metrics::tsne_export(metrics::embed_all(f, metrics::resized(ri, sz)), metrics::embed_all(f, fi),
                                              derive_seed(c.metrics.seed, "tsne"));
        fs::create_directories(tsne.parent_path());
        std::ofstream out(tsne, std::ios::trunc);
        metrics::write_tsne_csv(out, pts);
        log::info("eval: FID " + std::to_string(report.fid) + ", KID " + std::to_string(report.kid) + ", PPL "
                  + std::to_string(report.ppl));
        return report.to_json();
    });
}

inline nlohmann::json cmd_downstream(const ExperimentConfig& c)
{
    const Layout L(c);
    return run_command(c, "downstream", {"downstream"}, [&] {
        const auto f = load_scorer(L);
        const auto run = run_downstream(load_corpus_patches(L), f, scorer_size(c), c.downstream, c.gan);
        nlohmann::json j = {{"synthetic", run.synthetic.to_json()},
                            {"real", run.real.to_json()},
                            {"gap_points", run.gap_points()},
                            {"n_train", run.n_train},
                            {"n_test", run.n_test}};
        write_json(L.root / "downstream" / "report.json", j);
        log::info("downstream: synthetic " + std::to_string(run.synthetic.overall) + ", real "
                  + std::to_string(run.real.overall));
        return j;
    });
}

/// Serves the similarity API; GAN samples are indexed as "gan-samples" when present.
inline int cmd_serve(const ExperimentConfig& c, const std::function<void(simsvc::Service&)>& on_ready = {})
{
    const Layout L(c);
    simsvc::ServiceConfig sc = c.serve;
    sc.index_dir = L.index_dir;
    sc.runs_dir = L.runs_dir;
    simsvc::Service svc(sc, load_scorer(L));
    const int port = svc.bind();
    if (fs::is_directory(L.gan() / "samples")) {
        try {
            svc.index("gan-samples");
        } catch (const DependencyError&) {
            svc.build(L.gan() / "samples", "gan-samples");
        }
    }
    log::info("serve: listening on http://" + sc.host + ":" + std::to_string(port));
    if (on_ready) {
        on_ready(svc);
        return port;
    }
    svc.listen();
    return port;
}

/// 0 ok, 2 config, 3 dependency, 4 numeric domain, 1 anything else.
inline int exit_code_for(const std::exception_ptr& e)
{
    try {
        std::rethrow_exception(e);
    } catch (const ConfigError&) {
        return 2;
    } catch (const InvalidInput&) {
        return 2;
    } catch (const DependencyError&) {
        return 3;
    } catch (const NumericDomainError&) {
        return 4;
    } catch (...) {
        return 1;
    }
}

} // namespace simgan::xcli
