#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/digest.hpp"
#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/log.hpp"
#include "simgan/core/png_io.hpp"
#include "simgan/snn/extractor.hpp"
#include "simgan/snn/score.hpp"

namespace simgan::simsvc {

namespace fs = std::filesystem;

struct IndexEntry {
    std::string image_id;
    Eigen::VectorXd embedding;
    std::string path;
};

struct SimilarityIndex {
    std::string index_id;
    std::string extractor_digest;
    std::string created_at;
    std::vector<IndexEntry> entries;

    [[nodiscard]] std::size_t size() const { return entries.size(); }
    [[nodiscard]] int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().embedding.size()); }

    [[nodiscard]] const IndexEntry* find(const std::string& image_id) const
    {
        for (const auto& e : entries) {
            if (e.image_id == image_id) {
                return &e;
            }
        }
        return nullptr;
    }
};

struct Match {
    std::string image_id;
    double score = 0.0;
};

struct QueryResult {
    std::vector<Match> results;
    std::string query_digest;
};

inline std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline bool valid_index_id(const std::string& id)
{
    return !id.empty() && id.size() <= 128
           && std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'; })
           && id != "." && id != "..";
}

/// Embeds every PNG in `image_dir` (sorted by file name; image_id = file stem).
/// Unreadable or unsupported images are skipped with a warning.
inline SimilarityIndex build_index(const fs::path& image_dir, const snn::LayeredExtractor& extractor,
                                   const std::string& index_id, std::vector<std::string>* warnings = nullptr)
{
    if (!valid_index_id(index_id)) {
        throw InvalidInput("build_index: invalid index_id '" + index_id + "'");
    }
    if (!fs::is_directory(image_dir)) {
        throw InvalidInput("build_index: not a directory: " + image_dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(image_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    if (files.empty()) {
        throw InvalidInput("build_index: no PNG images in " + image_dir.string());
    }
    std::sort(files.begin(), files.end());
    auto warn = [&](const std::string& msg) {
        log::warn(msg);
        if (warnings) {
            warnings->push_back(msg);
        }
    };

    SimilarityIndex idx;
    idx.index_id = index_id;
    idx.extractor_digest = extractor.digest();
    idx.created_at = utc_now();
    for (const auto& f : files) {
        Image img;
        try {
            img = read_png(f);
        } catch (const std::exception& e) {
            warn("skipping unreadable image " + f.string() + ": " + e.what());
            continue;
        }
        if (!extractor.accepts(img.height(), img.width())) {
            warn("skipping " + f.string() + ": resolution not accepted by the extractor");
            continue;
        }
        Eigen::VectorXd emb = extractor.embed(img);
        if (emb.norm() == 0.0) {
            warn("skipping " + f.string() + ": zero embedding");
            continue;
        }
        if (!idx.entries.empty() && emb.size() != idx.entries.front().embedding.size()) {
            throw InvalidInput("build_index: embedding dimension changed");
        }
        idx.entries.push_back({f.stem().string(), std::move(emb), fs::absolute(f).string()});
    }
    if (idx.entries.empty()) {
        throw InvalidInput("build_index: no usable images in " + image_dir.string());
    }
    return idx;
}

/// Writes `<dir>/<id>.bin` and `<dir>/<id>.json` through temporary files and
/// renames; the manifest lands last so a reader sees a complete index or none.
inline void save_index(const fs::path& dir, const SimilarityIndex& idx)
{
    fs::create_directories(dir);
    const fs::path bin = dir / (idx.index_id + ".bin");
    const fs::path man = dir / (idx.index_id + ".json");
    const fs::path bin_tmp = dir / (idx.index_id + ".bin.tmp");
    const fs::path man_tmp = dir / (idx.index_id + ".json.tmp");

    std::string blob;
    for (const auto& e : idx.entries) {
        blob.append(reinterpret_cast<const char*>(e.embedding.data()),
                    static_cast<std::size_t>(e.embedding.size()) * sizeof(double));
    }
    {
        std::ofstream out(bin_tmp, std::ios::binary | std::ios::trunc);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) {
            throw std::runtime_error("save_index: cannot write " + bin_tmp.string());
        }
    }
    nlohmann::json j;
    j["index_id"] = idx.index_id;
    j["extractor_digest"] = idx.extractor_digest;
    j["created_at"] = idx.created_at;
    j["dim"] = idx.dim();
    j["blob_sha256"] = sha256_hex(blob);
    j["entries"] = nlohmann::json::array();
    for (const auto& e : idx.entries) {
        j["entries"].push_back({{"image_id", e.image_id}, {"path", e.path}});
    }
    {
        std::ofstream out(man_tmp, std::ios::trunc);
        out << j.dump(2) << '\n';
        if (!out) {
            throw std::runtime_error("save_index: cannot write " + man_tmp.string());
        }
    }
    fs::rename(bin_tmp, bin);
    fs::rename(man_tmp, man);
}

inline SimilarityIndex load_index(const fs::path& dir, const std::string& index_id)
{
    if (!valid_index_id(index_id)) {
        throw InvalidInput("load_index: invalid index_id '" + index_id + "'");
    }
    const fs::path man = dir / (index_id + ".json");
    const fs::path bin = dir / (index_id + ".bin");
    if (!fs::exists(man) || !fs::exists(bin)) {
        throw DependencyError("index '" + index_id + "' not found in " + dir.string());
    }
    nlohmann::json j;
    {
        std::ifstream in(man);
        j = nlohmann::json::parse(in);
    }
    std::string blob;
    {
        std::ifstream in(bin, std::ios::binary);
        blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (sha256_hex(blob) != j.at("blob_sha256").get<std::string>()) {
        throw DependencyError("index '" + index_id + "': embedding blob does not match its manifest");
    }
    SimilarityIndex idx;
    idx.index_id = j.at("index_id").get<std::string>();
    idx.extractor_digest = j.at("extractor_digest").get<std::string>();
    idx.created_at = j.value("created_at", "");
    const int dim = j.at("dim").get<int>();
    const auto& entries = j.at("entries");
    if (blob.size() != entries.size() * static_cast<std::size_t>(dim) * sizeof(double)) {
        throw DependencyError("index '" + index_id + "': blob size mismatch");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        IndexEntry e;
        e.image_id = entries[i].at("image_id").get<std::string>();
        e.path = entries[i].at("path").get<std::string>();
        e.embedding.resize(dim);
        std::memcpy(e.embedding.data(), blob.data() + i * static_cast<std::size_t>(dim) * sizeof(double),
                    static_cast<std::size_t>(dim) * sizeof(double));
        idx.entries.push_back(std::move(e));
    }
    return idx;
}

/// Ids of complete indexes (manifest present) in `dir`, sorted.
inline std::vector<std::string> list_indexes(const fs::path& dir)
{
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) {
        return out;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        const fs::path p = e.path();
        if (p.extension() == ".json" && fs::exists(fs::path(p).replace_extension(".bin"))) {
            out.push_back(p.stem().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Top-k entries by cosine score given a query embedding; ties by image_id.
inline std::vector<Match> rank(const SimilarityIndex& idx, const Eigen::VectorXd& query, int k)
{
    if (k < 1) {
        throw InvalidInput("query_topk: k must be >= 1");
    }
    if (query.size() != idx.dim()) {
        throw InvalidInput("query_topk: embedding dimension differs from the index");
    }
    std::vector<Match> all;
    all.reserve(idx.size());
    for (const auto& e : idx.entries) {
        all.push_back({e.image_id, snn::score_embeddings(query, e.embedding)});
    }
    const std::size_t n = std::min(all.size(), static_cast<std::size_t>(k));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                      [](const Match& a, const Match& b) {
                          return a.score != b.score ? a.score > b.score : a.image_id < b.image_id;
                      });
    all.resize(n);
    return all;
}

inline QueryResult query_topk(const SimilarityIndex& idx, const snn::LayeredExtractor& extractor, const Image& query,
                              int k)
{
    if (extractor.digest() != idx.extractor_digest) {
        throw InvalidInput("query_topk: extractor digest does not match index '" + idx.index_id + "'");
    }
    extractor.check_input(query.height(), query.width());
    QueryResult r;
    r.results = rank(idx, extractor.embed(query), k);
    Sha256 h;
    const int dims[2] = {query.height(), query.width()};
    h.update(dims, sizeof(dims));
    h.update(query.pixels());
    r.query_digest = h.hex();
    return r;
}

} // namespace simgan::simsvc
