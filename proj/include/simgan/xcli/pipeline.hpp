#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "simgan/core/log.hpp"
#include "simgan/core/random.hpp"
#include "simgan/core/stats.hpp"
#include "simgan/corpus/pairs.hpp"
#include "simgan/corpus/patches.hpp"
#include "simgan/corpus/segment.hpp"
#include "simgan/corpus/synth.hpp"
#include "simgan/downstream/classifier.hpp"
#include "simgan/downstream/dataset.hpp"
#include "simgan/gan/trainer.hpp"
#include "simgan/snn/score.hpp"
#include "simgan/snn/trainer.hpp"
#include "simgan/xcli/config.hpp"

// In-memory stages shared by the CLI commands and the acceptance runner.
namespace simgan::xcli {

inline std::vector<corpus::SlideImage> make_slides(const CorpusSection& c)
{
    corpus::SynthConfig sc;
    sc.height = c.slide_size;
    sc.width = c.slide_size;
    return corpus::synth_corpus(c.n_slides, c.classes, c.seed, sc);
}

inline corpus::PatchConfig patch_config(const CorpusSection& c)
{
    return {c.patch_size, c.stride, c.min_tissue};
}

inline std::vector<corpus::Patch> make_patches(const std::vector<corpus::SlideImage>& slides, const CorpusSection& c)
{
    std::vector<corpus::Patch> out;
    for (const auto& s : slides) {
        const auto mask = corpus::segment_tissue(s, c.sat_threshold, c.min_region_px);
        auto ps = corpus::extract_patches(s, mask, patch_config(c));
        out.insert(out.end(), std::make_move_iterator(ps.begin()), std::make_move_iterator(ps.end()));
    }
    if (out.empty()) {
        throw InvalidInput("corpus produced no patches; lower corpus.min_tissue or enlarge slides");
    }
    return out;
}

struct HoldoutSplit {
    std::vector<corpus::Patch> train;
    std::vector<corpus::Patch> heldout;
};

/// Per slide, floor(n * holdout_fraction) randomly chosen patches are held out.
inline HoldoutSplit split_holdout(const std::vector<corpus::Patch>& patches, const CorpusSection& c)
{
    std::map<std::string, std::vector<const corpus::Patch*>> by_slide;
    for (const auto& p : patches) {
        by_slide[p.source_slide].push_back(&p);
    }
    HoldoutSplit out;
    for (auto& [slide, ps] : by_slide) {
        Rng rng = make_rng(c.seed, "holdout:" + slide);
        std::shuffle(ps.begin(), ps.end(), rng);
        const auto nh = static_cast<std::size_t>(static_cast<double>(ps.size()) * c.holdout_fraction);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            (i < nh ? out.heldout : out.train).push_back(*ps[i]);
        }
    }
    if (out.train.empty() || out.heldout.empty()) {
        throw InvalidInput("hold-out split left one side empty; adjust corpus.holdout_fraction");
    }
    return out;
}

struct PairSets {
    std::vector<corpus::PairSample> wsi;
    std::vector<corpus::PairSample> patch;
    std::vector<corpus::PairSample> heldout;
};

inline PairSets make_pairs(const std::vector<corpus::SlideImage>& slides, const HoldoutSplit& split,
                           const CorpusSection& c)
{
    PairSets p;
    p.wsi = corpus::build_pairs(corpus::slides_as_patches(slides, c.wsi_resize), c.wsi_pairs_per_level, c.aug,
                                derive_seed(c.seed, "pairs-wsi"));
    p.patch = corpus::build_pairs(split.train, c.patch_pairs_per_level, c.aug, derive_seed(c.seed, "pairs-patch"));
    p.heldout = corpus::build_pairs(split.heldout, c.heldout_pairs_per_level, c.aug,
                                    derive_seed(c.seed, "pairs-heldout"));
    return p;
}

struct SnnRun {
    snn::LayeredExtractor initial; ///< after pretraining, before the stages
    snn::LayeredExtractor extractor;
    std::vector<double> pretrain_history;
    std::vector<snn::StageResult> stages;
};

/// Reconstruction warm start on every n-th training patch, then the two fine-tuning stages.
inline SnnRun train_snn(const SnnSection& s, const std::vector<corpus::Patch>& train_patches, const PairSets& pairs)
{
    snn::LayeredExtractor f(s.extractor_config(), s.seed);
    SnnRun run{f, f, {}, {}};
    if (s.pretrain_epochs > 0) {
        std::vector<Image> pre;
        for (std::size_t i = 0; i < train_patches.size(); i += static_cast<std::size_t>(s.pretrain_every)) {
            pre.push_back(train_patches[i].pixels);
        }
        run.pretrain_history = snn::pretrain_reconstruction(f, pre, s.pretrain_epochs, s.pretrain_batch,
                                                            s.pretrain_lr, derive_seed(s.seed, "pretrain"));
    }
    run.initial = f;
    auto [out, stages] = snn::train_mft(f, s.stage1, s.stage2, pairs.wsi, pairs.patch, s.seed);
    run.extractor = std::move(out);
    run.stages = std::move(stages);
    return run;
}

struct Separation {
    double sim = 0.0;
    double dissim_a = 0.0;
    double dissim_b = 0.0;

    /// Mean SIM minus the mean over all DISSIM pairs.
    double gap = 0.0;

    [[nodiscard]] bool ordered() const { return sim > dissim_a && dissim_a > dissim_b; }

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"sim", sim}, {"dissim_a", dissim_a}, {"dissim_b", dissim_b}, {"gap", gap}, {"ordered", ordered()}};
    }
};

inline Separation separation(const snn::LayeredExtractor& f, const std::vector<corpus::PairSample>& pairs)
{
    std::map<corpus::PairLevel, std::pair<double, int>> acc;
    double dissim_sum = 0.0;
    int dissim_n = 0;
    for (const auto& p : pairs) {
        const double s = snn::score_pair(f, p.a.pixels, p.b.pixels);
        auto& [sum, n] = acc[p.level];
        sum += s;
        ++n;
        if (p.level != corpus::PairLevel::Sim) {
            dissim_sum += s;
            ++dissim_n;
        }
    }
    auto mean = [&](corpus::PairLevel l) {
        const auto it = acc.find(l);
        if (it == acc.end() || it->second.second == 0) {
            throw InvalidInput("separation: no held-out pairs at level " + std::string(corpus::to_string(l)));
        }
        return it->second.first / it->second.second;
    };
    Separation s;
    s.sim = mean(corpus::PairLevel::Sim);
    s.dissim_a = mean(corpus::PairLevel::DissimA);
    s.dissim_b = mean(corpus::PairLevel::DissimB);
    s.gap = s.sim - dissim_sum / dissim_n;
    return s;
}

/// Patches brought down to the generator resolution.
inline std::vector<Image> gan_images(const std::vector<corpus::Patch>& patches, const gan::GanConfig& g)
{
    std::vector<Image> out;
    out.reserve(patches.size());
    for (const auto& p : patches) {
        const int factor = p.pixels.height() / g.image_size;
        if (factor < 1 || p.pixels.height() % g.image_size != 0 || p.pixels.width() != p.pixels.height()) {
            throw ConfigError("patch size must be a multiple of gan.image_size");
        }
        out.push_back(factor == 1 ? p.pixels : downsample_box(p.pixels, factor));
    }
    return out;
}

inline double reward_spearman(const gan::RewardTrace& trace)
{
    std::vector<double> e;
    std::vector<double> r;
    for (const auto& m : trace.epoch_means()) {
        e.push_back(m.epoch);
        r.push_back(m.reward);
    }
    return e.size() < 2 ? 0.0 : spearman(e, r);
}

inline gan::TrainResult train_gan(const std::vector<Image>& data, const snn::LayeredExtractor& scorer_net,
                                  int scorer_size, const gan::GanConfig& cfg,
                                  const std::optional<fs::path>& checkpoint_dir = std::nullopt)
{
    auto [g, d] = gan::make_models(cfg);
    return gan::train(std::move(g), std::move(d), gan::Scorer{&scorer_net, scorer_size}, data, cfg, checkpoint_dir);
}

struct DownstreamRun {
    downstream::EvalReport synthetic;
    downstream::EvalReport real;
    std::vector<std::string> class_names;
    std::size_t n_train = 0;
    std::size_t n_test = 0;

    [[nodiscard]] double gap_points() const { return 100.0 * (real.overall - synthetic.overall); }
};

/// Slide-disjoint split; one generator per class trained on that class's training
/// patches and sampled to the same count; both classifiers scored on the real test split.
inline DownstreamRun run_downstream(const std::vector<corpus::Patch>& patches, const snn::LayeredExtractor& f,
                                    int scorer_size, const DownstreamSection& ds, const gan::GanConfig& gan_base)
{
    const auto& cc = ds.cls;
    const auto [train, test] = downstream::split_by_slide(patches, cc.train_fraction, cc.seed);
    DownstreamRun out;
    out.class_names = downstream::class_names_of(patches);
    const auto real_train = downstream::labeled_from_patches(train, out.class_names);
    const auto real_test = downstream::labeled_from_patches(test, out.class_names);
    out.n_train = real_train.size();
    out.n_test = real_test.size();
    downstream::LabeledSet synth;
    synth.class_names = out.class_names;
    for (int c = 0; c < static_cast<int>(out.class_names.size()); ++c) {
        std::vector<corpus::Patch> mine;
        for (const auto& p : train) {
            if (p.class_label == out.class_names[static_cast<std::size_t>(c)]) {
                mine.push_back(p);
            }
        }
        gan::GanConfig g = gan_base;
        g.epochs = ds.gan_epochs;
        g.seed = derive_seed(cc.seed, "cls-gan", static_cast<std::uint64_t>(c));
        const auto data = gan_images(mine, g);
        log::info("downstream: generator for '" + out.class_names[static_cast<std::size_t>(c)] + "' on "
                  + std::to_string(data.size()) + " patches");
        const auto r = train_gan(data, f, scorer_size, g);
        for (auto& img : gan::sample(r.gen, static_cast<int>(data.size()),
                                     derive_seed(cc.seed, "cls-sample", static_cast<std::uint64_t>(c)))) {
            synth.add(std::move(img), c);
        }
    }
    auto [s, r] = downstream::run_comparison(synth, real_train, real_test, f, cc);
    out.synthetic = std::move(s);
    out.real = std::move(r);
    return out;
}

} // namespace simgan::xcli
