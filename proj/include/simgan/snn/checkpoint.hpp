#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "simgan/core/digest.hpp"
#include "simgan/nn/archive.hpp"
#include "simgan/snn/extractor.hpp"
#include "simgan/snn/trainer.hpp"

// A checkpoint is <stem>.bin (tensor archive, entries layer<i>.<k>) plus
// <stem>.json describing the extractor config, stage plan, seed and digests.
namespace simgan::snn {

namespace fs = std::filesystem;

inline nlohmann::json extractor_manifest(const LayeredExtractor& f)
{
    const auto idx = f.trainable_indices();
    return {{"extractor", f.config().to_json()},
            {"embedding_dim", f.embedding_dim()},
            {"param_digest", f.digest()},
            {"trainable_layer_indices", std::vector<int>(idx.begin(), idx.end())}};
}

inline void save_extractor(const fs::path& stem, const LayeredExtractor& f, nlohmann::json extra = nlohmann::json::object())
{
    nn::TensorArchive ar;
    f.save_into(ar);
    fs::path bin = stem;
    bin += ".bin";
    ar.save(bin);
    nlohmann::json j = extractor_manifest(f);
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        j[it.key()] = it.value();
    }
    j["archive"] = bin.filename().string();
    j["archive_sha256"] = sha256_file(bin);
    fs::path js = stem;
    js += ".json";
    std::ofstream(js) << j.dump(2) << "\n";
}

inline void save_stage(const fs::path& stem, const StageResult& r)
{
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : r.loss_history) {
        hist.push_back({{"contrastive", e.contrastive}, {"reconstruction", e.reconstruction}});
    }
    save_extractor(stem, r.extractor,
                   {{"plan", r.plan.to_json()},
                    {"seed", r.seed},
                    {"frozen_param_digest", r.frozen_digest_after},
                    {"frozen_param_digest_before", r.frozen_digest_before},
                    {"loss_history", hist},
                    {"warning", r.warning}});
}

inline nlohmann::json read_manifest(const fs::path& stem)
{
    fs::path js = stem;
    js += ".json";
    std::ifstream in(js);
    if (!in) {
        throw DependencyError("missing checkpoint manifest " + js.string());
    }
    return nlohmann::json::parse(in);
}

/// Loads <stem>.bin / <stem>.json; trainable flags are restored from the manifest.
inline LayeredExtractor load_extractor(const fs::path& stem)
{
    const auto j = read_manifest(stem);
    LayeredExtractor f(ExtractorConfig::from_json(j.at("extractor")));
    fs::path bin = stem;
    bin += ".bin";
    f.load_from(nn::TensorArchive::load(bin));
    const auto idx = j.at("trainable_layer_indices").get<std::vector<int>>();
    f.set_trainable(std::set<int>(idx.begin(), idx.end()));
    if (f.digest() != j.at("param_digest").get<std::string>()) {
        throw DependencyError("checkpoint " + bin.string() + " does not match its manifest digest");
    }
    return f;
}

} // namespace simgan::snn
