#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <optional>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/digest.hpp"
#include "simgan/core/error.hpp"
#include "simgan/corpus/types.hpp"
#include "simgan/downstream/classifier.hpp"
#include "simgan/gan/models.hpp"
#include "simgan/metrics/report.hpp"
#include "simgan/simsvc/server.hpp"
#include "simgan/snn/extractor.hpp"
#include "simgan/snn/trainer.hpp"

namespace simgan::xcli {

namespace fs = std::filesystem;
using nlohmann::json;

struct CorpusSection {
    int n_slides = 16;
    int classes = 2;
    std::uint64_t seed = 1;
    int slide_size = 384;
    int patch_size = 64;
    int stride = 32;
    double min_tissue = 0.5;
    double sat_threshold = 0.08;
    int min_region_px = 256;
    double holdout_fraction = 0.2; ///< per-slide share of patches kept for held-out pairs
    int wsi_pairs_per_level = 16;
    int patch_pairs_per_level = 128;
    int heldout_pairs_per_level = 50;
    int wsi_resize = 224;
    corpus::AugConfig aug;
};

struct SnnSection {
    std::string extractor = "desk"; ///< desk | vgg16
    int embedding_dim = 128;
    std::uint64_t seed = 1;
    int pretrain_epochs = 3;
    int pretrain_every = 4; ///< every n-th training patch is used for reconstruction pretraining
    double pretrain_lr = 1e-3;
    int pretrain_batch = 32;
    snn::StagePlan stage1;
    snn::StagePlan stage2;

    [[nodiscard]] snn::ExtractorConfig extractor_config() const
    {
        if (extractor == "desk") {
            return snn::ExtractorConfig::desk(embedding_dim);
        }
        if (extractor == "vgg16") {
            return snn::ExtractorConfig::vgg16(embedding_dim);
        }
        throw ConfigError("snn.extractor must be 'desk' or 'vgg16'");
    }
};

struct MetricsSection {
    metrics::EvalConfig eval;
    std::uint64_t seed = 1;
    int tsne_samples = 200; ///< per source
};

struct DownstreamSection {
    downstream::ClsConfig cls;
    int gan_epochs = 30; ///< per-class generator training
};

struct ExperimentConfig {
    std::string output_dir = "out";
    CorpusSection corpus;
    SnnSection snn;
    gan::GanConfig gan;
    MetricsSection metrics;
    DownstreamSection downstream;
    simsvc::ServiceConfig serve;

    [[nodiscard]] json to_json() const;
    static ExperimentConfig from_json(const json& j);
    void validate() const;

    /// SHA-256 of the canonical JSON form, output_dir excluded.
    [[nodiscard]] std::string hash() const
    {
        json j = to_json();
        j.erase("output_dir");
        return sha256_hex(j.dump());
    }
};

/// Desk-scale defaults.
inline ExperimentConfig default_config()
{
    ExperimentConfig c;
    const snn::LayeredExtractor f(c.snn.extractor_config(), 0);
    c.snn.stage1 = snn::StagePlan::stage1_defaults(f);
    c.snn.stage2 = snn::StagePlan::stage2_defaults(f);
    c.gan = gan::GanConfig::desk();
    c.gan.seed = 1;
    c.metrics.eval.input_size = 64;
    c.downstream.cls = downstream::ClsConfig::desk();
    c.downstream.cls.seed = 1;
    return c;
}

inline json ExperimentConfig::to_json() const
{
    json j;
    j["output_dir"] = output_dir;
    j["corpus"] = {{"n_slides", corpus.n_slides},
                   {"classes", corpus.classes},
                   {"seed", corpus.seed},
                   {"slide_size", corpus.slide_size},
                   {"patch_size", corpus.patch_size},
                   {"stride", corpus.stride},
                   {"min_tissue", corpus.min_tissue},
                   {"sat_threshold", corpus.sat_threshold},
                   {"min_region_px", corpus.min_region_px},
                   {"holdout_fraction", corpus.holdout_fraction},
                   {"wsi_pairs_per_level", corpus.wsi_pairs_per_level},
                   {"patch_pairs_per_level", corpus.patch_pairs_per_level},
                   {"heldout_pairs_per_level", corpus.heldout_pairs_per_level},
                   {"wsi_resize", corpus.wsi_resize},
                   {"aug",
                    {{"brightness", corpus.aug.brightness},
                     {"contrast_lo", corpus.aug.contrast_lo},
                     {"contrast_hi", corpus.aug.contrast_hi},
                     {"noise_sigma", corpus.aug.noise_sigma}}}};
    j["snn"] = {{"extractor", snn.extractor},
                {"embedding_dim", snn.embedding_dim},
                {"seed", snn.seed},
                {"pretrain_epochs", snn.pretrain_epochs},
                {"pretrain_every", snn.pretrain_every},
                {"pretrain_lr", snn.pretrain_lr},
                {"pretrain_batch", snn.pretrain_batch},
                {"stage1", snn.stage1.to_json()},
                {"stage2", snn.stage2.to_json()}};
    j["gan"] = gan.to_json();
    j["metrics"] = metrics.eval.to_json();
    j["metrics"]["seed"] = metrics.seed;
    j["metrics"]["tsne_samples"] = metrics.tsne_samples;
    j["downstream"] = downstream.cls.to_json();
    j["downstream"]["gan_epochs"] = downstream.gan_epochs;
    j["serve"] = serve.to_json();
    return j;
}

inline ExperimentConfig ExperimentConfig::from_json(const json& j)
{
    ExperimentConfig c = default_config();
    try {
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("corpus")) {
            const json& s = j.at("corpus");
            auto& k = c.corpus;
            k.n_slides = s.value("n_slides", k.n_slides);
            k.classes = s.value("classes", k.classes);
            k.seed = s.value("seed", k.seed);
            k.slide_size = s.value("slide_size", k.slide_size);
            k.patch_size = s.value("patch_size", k.patch_size);
            k.stride = s.value("stride", k.stride);
            k.min_tissue = s.value("min_tissue", k.min_tissue);
            k.sat_threshold = s.value("sat_threshold", k.sat_threshold);
            k.min_region_px = s.value("min_region_px", k.min_region_px);
            k.holdout_fraction = s.value("holdout_fraction", k.holdout_fraction);
            k.wsi_pairs_per_level = s.value("wsi_pairs_per_level", k.wsi_pairs_per_level);
            k.patch_pairs_per_level = s.value("patch_pairs_per_level", k.patch_pairs_per_level);
            k.heldout_pairs_per_level = s.value("heldout_pairs_per_level", k.heldout_pairs_per_level);
            k.wsi_resize = s.value("wsi_resize", k.wsi_resize);
            if (s.contains("aug")) {
                const json& a = s.at("aug");
                k.aug.brightness = a.value("brightness", k.aug.brightness);
                k.aug.contrast_lo = a.value("contrast_lo", k.aug.contrast_lo);
                k.aug.contrast_hi = a.value("contrast_hi", k.aug.contrast_hi);
                k.aug.noise_sigma = a.value("noise_sigma", k.aug.noise_sigma);
            }
        }
        if (j.contains("snn")) {
            const json& s = j.at("snn");
            auto& k = c.snn;
            k.extractor = s.value("extractor", k.extractor);
            k.embedding_dim = s.value("embedding_dim", k.embedding_dim);
            k.seed = s.value("seed", k.seed);
            k.pretrain_epochs = s.value("pretrain_epochs", k.pretrain_epochs);
            k.pretrain_every = s.value("pretrain_every", k.pretrain_every);
            k.pretrain_lr = s.value("pretrain_lr", k.pretrain_lr);
            k.pretrain_batch = s.value("pretrain_batch", k.pretrain_batch);
            json p1 = k.stage1.to_json();
            json p2 = k.stage2.to_json();
            if (s.contains("stage1")) {
                p1.merge_patch(s.at("stage1"));
            }
            if (s.contains("stage2")) {
                p2.merge_patch(s.at("stage2"));
            }
            k.stage1 = snn::StagePlan::from_json(p1);
            k.stage2 = snn::StagePlan::from_json(p2);
        }
        if (j.contains("gan")) {
            c.gan = gan::GanConfig::from_json(j.at("gan"), c.gan);
        }
        if (j.contains("metrics")) {
            json m = c.metrics.eval.to_json();
            m.merge_patch(j.at("metrics"));
            c.metrics.eval = metrics::EvalConfig::from_json(m);
            c.metrics.seed = m.value("seed", c.metrics.seed);
            c.metrics.tsne_samples = m.value("tsne_samples", c.metrics.tsne_samples);
        }
        if (j.contains("downstream")) {
            c.downstream.cls = downstream::ClsConfig::from_json(j.at("downstream"), c.downstream.cls);
            c.downstream.gan_epochs = j.at("downstream").value("gan_epochs", c.downstream.gan_epochs);
        }
        if (j.contains("serve")) {
            json s = c.serve.to_json();
            s.merge_patch(j.at("serve"));
            c.serve = simsvc::ServiceConfig::from_json(s);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

inline void ExperimentConfig::validate() const
{
    const auto& k = corpus;
    if (k.n_slides < 2 || k.classes < 2 || k.slide_size < 32 || k.patch_size < 8 || k.stride < 1
        || k.patch_size > k.slide_size || k.min_tissue < 0 || k.min_tissue > 1 || k.holdout_fraction <= 0
        || k.holdout_fraction >= 1 || k.wsi_pairs_per_level < 1 || k.patch_pairs_per_level < 1
        || k.heldout_pairs_per_level < 1 || k.wsi_resize < 8) {
        throw ConfigError("corpus: invalid sizes, counts or fractions");
    }
    if (output_dir.empty()) {
        throw ConfigError("output_dir must not be empty");
    }
    const snn::LayeredExtractor f(snn.extractor_config(), 0);
    if (snn.pretrain_epochs < 0 || snn.pretrain_every < 1 || !(snn.pretrain_lr > 0) || snn.pretrain_batch < 1) {
        throw ConfigError("snn: pretraining settings must be positive");
    }
    snn.stage1.validate(f);
    snn.stage2.validate(f);
    if (snn.stage1.stage_id != 1 || snn.stage2.stage_id != 2) {
        throw ConfigError("snn: stage1/stage2 must carry stage_id 1 and 2");
    }
    if (snn.stage2.input_h != k.patch_size || snn.stage2.input_w != k.patch_size) {
        throw ConfigError("snn.stage2.input_resolution must equal corpus.patch_size");
    }
    if (snn.stage1.input_h != k.wsi_resize || snn.stage1.input_w != k.wsi_resize) {
        throw ConfigError("snn.stage1.input_resolution must equal corpus.wsi_resize");
    }
    gan.validate();
    if (k.patch_size % gan.image_size != 0) {
        throw ConfigError("gan.image_size must divide corpus.patch_size");
    }
    metrics.eval.validate();
    if (metrics.tsne_samples < 5) {
        throw ConfigError("metrics.tsne_samples must be >= 5");
    }
    downstream.cls.validate();
    if (downstream.gan_epochs < 0) {
        throw ConfigError("downstream.gan_epochs must be >= 0");
    }
    if (serve.port < 0 || serve.port > 65535) {
        throw ConfigError("serve.port out of range");
    }
    for (const fs::path& p : {serve.index_dir, serve.runs_dir}) {
        if (p.empty() || p.is_absolute()
            || std::any_of(p.begin(), p.end(), [](const fs::path& part) { return part == ".."; })) {
            throw ConfigError("serve.index_dir and serve.runs_dir must be relative paths inside output_dir");
        }
    }
}

namespace detail {

/// Rejects keys of `user` that do not appear in `reference` (objects only).
inline void check_known_keys(const json& user, const json& reference, const std::string& path)
{
    if (!user.is_object()) {
        return;
    }
    if (!reference.is_object()) {
        throw ConfigError("config: '" + path + "' is not an object");
    }
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!reference.contains(it.key())) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
        const json& ref = reference.at(it.key());
        if (ref.is_object()) {
            check_known_keys(it.value(), ref, key);
        } else if (ref.is_number() && !it.value().is_number()) {
            throw ConfigError("config: '" + key + "' must be a number");
        } else if (ref.is_string() && !it.value().is_string()) {
            throw ConfigError("config: '" + key + "' must be a string");
        } else if (ref.is_boolean() && !it.value().is_boolean()) {
            throw ConfigError("config: '" + key + "' must be a boolean");
        } else if (ref.is_array() && !it.value().is_array()) {
            throw ConfigError("config: '" + key + "' must be an array");
        }
    }
}

} // namespace detail

/// Applies `a.b.c=value`; value is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json patch = value;
    std::vector<std::string> keys;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
        if (it->empty()) {
            throw ConfigError("override '" + assignment + "' has an empty key");
        }
        patch = json{{*it, patch}};
    }
    detail::check_known_keys(patch, default_config().to_json(), "");
    doc.merge_patch(patch);
}

/// Defaults <- file <- overrides, then schema checks and validation.
inline ExperimentConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides)
{
    json doc = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) {
            throw ConfigError("cannot read config " + path->string());
        }
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config " + path->string() + " is not valid JSON: " + e.what());
        }
        detail::check_known_keys(doc, default_config().to_json(), "");
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    ExperimentConfig c = ExperimentConfig::from_json(doc);
    c.validate();
    return c;
}

/// Sets every section seed.
inline void set_all_seeds(ExperimentConfig& c, std::uint64_t seed)
{
    c.corpus.seed = seed;
    c.snn.seed = seed;
    c.gan.seed = seed;
    c.metrics.seed = seed;
    c.downstream.cls.seed = seed;
}

/// JSON Schema (draft 2020-12) describing the config document, derived from the defaults.
inline json config_schema()
{
    std::function<json(const json&)> describe = [&](const json& v) -> json {
        if (v.is_object()) {
            json props = json::object();
            for (auto it = v.begin(); it != v.end(); ++it) {
                props[it.key()] = describe(it.value());
            }
            return {{"type", "object"}, {"properties", props}, {"additionalProperties", false}};
        }
        if (v.is_array()) {
            return {{"type", "array"}, {"default", v}};
        }
        if (v.is_boolean()) {
            return {{"type", "boolean"}, {"default", v}};
        }
        if (v.is_number_integer() || v.is_number_unsigned()) {
            return {{"type", "integer"}, {"default", v}};
        }
        if (v.is_number()) {
            return {{"type", "number"}, {"default", v}};
        }
        return {{"type", "string"}, {"default", v}};
    };
    json s = describe(default_config().to_json());
    s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
    s["title"] = "simgan experiment config";
    return s;
}

} // namespace simgan::xcli
