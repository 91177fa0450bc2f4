#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "simgan/core/png_io.hpp"
#include "simgan/corpus/pairs.hpp"
#include "simgan/corpus/patches.hpp"
#include "simgan/corpus/types.hpp"

// On-disk corpus layout:
//   slides/<class>/<slide_id>.png
//   patches/<class>/<slide_id>/<row>_<col>.png   (+ patches/index.json)
//   pairs/manifest.jsonl                          (one pair per line)
namespace simgan::corpus {

namespace fs = std::filesystem;

inline fs::path slide_relpath(const std::string& cls, const std::string& slide_id)
{
    return fs::path("slides") / cls / (slide_id + ".png");
}

inline fs::path patch_relpath(const Patch& p)
{
    return fs::path("patches") / p.class_label / p.source_slide
           / (std::to_string(p.grid_pos.row) + "_" + std::to_string(p.grid_pos.col) + ".png");
}

inline void write_slides(const fs::path& root, const std::vector<SlideImage>& slides)
{
    for (const auto& s : slides) {
        write_png(root / slide_relpath(s.class_label, s.slide_id), s.pixels);
    }
}

inline std::vector<SlideImage> read_slides(const fs::path& root)
{
    const fs::path dir = root / "slides";
    if (!fs::is_directory(dir)) {
        throw DependencyError("no slides under " + dir.string());
    }
    std::vector<SlideImage> out;
    for (const auto& cls : fs::directory_iterator(dir)) {
        if (!cls.is_directory()) {
            continue;
        }
        for (const auto& f : fs::directory_iterator(cls.path())) {
            if (f.path().extension() != ".png") {
                continue;
            }
            SlideImage s;
            s.pixels = read_png(f.path());
            s.slide_id = f.path().stem().string();
            s.class_label = cls.path().filename().string();
            out.push_back(std::move(s));
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.slide_id < b.slide_id; });
    return out;
}

inline void write_patches(const fs::path& root, const std::vector<Patch>& patches, const PatchConfig& cfg)
{
    for (const auto& p : patches) {
        write_png(root / patch_relpath(p), p.pixels);
    }
    nlohmann::json index = {{"size", cfg.size}, {"stride", cfg.stride}, {"min_tissue", cfg.min_tissue},
                            {"count", patches.size()}};
    fs::create_directories(root / "patches");
    std::ofstream(root / "patches" / "index.json") << index.dump(2) << "\n";
}

/// Parses patches/<class>/<slide>/<row>_<col>.png relative to the corpus root.
inline Patch load_patch(const fs::path& root, const fs::path& rel, int stride)
{
    Patch p;
    p.pixels = read_png(root / rel);
    p.source_slide = rel.parent_path().filename().string();
    p.class_label = rel.parent_path().parent_path().filename().string();
    const std::string stem = rel.stem().string();
    const auto sep = stem.find('_');
    if (sep == std::string::npos) {
        throw InvalidInput("malformed patch file name " + rel.string());
    }
    p.grid_pos = {std::stoi(stem.substr(0, sep)), std::stoi(stem.substr(sep + 1))};
    p.origin_y = p.grid_pos.row * stride;
    p.origin_x = p.grid_pos.col * stride;
    return p;
}

inline PatchConfig read_patch_index(const fs::path& root)
{
    const fs::path path = root / "patches" / "index.json";
    std::ifstream in(path);
    if (!in) {
        throw DependencyError("no patch index at " + path.string());
    }
    auto j = nlohmann::json::parse(in);
    return PatchConfig{j.at("size").get<int>(), j.at("stride").get<int>(), j.at("min_tissue").get<double>()};
}

/// All patches, ordered by (slide_id, row, col).
inline std::vector<Patch> read_patches(const fs::path& root)
{
    const PatchConfig cfg = read_patch_index(root);
    std::vector<Patch> out;
    for (const auto& f : fs::recursive_directory_iterator(root / "patches")) {
        if (f.is_regular_file() && f.path().extension() == ".png") {
            out.push_back(load_patch(root, fs::relative(f.path(), root), cfg.stride));
        }
    }
    std::sort(out.begin(), out.end(), [](const Patch& a, const Patch& b) {
        return std::tie(a.source_slide, a.grid_pos.row, a.grid_pos.col)
               < std::tie(b.source_slide, b.grid_pos.row, b.grid_pos.col);
    });
    return out;
}

/// Pairs over whole slides carry `resize`; pairs over patches reference patch files.
inline void write_pair_manifest(const fs::path& path, const std::vector<PairSample>& pairs, int slide_resize = 0)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& p : pairs) {
        nlohmann::json j;
        if (slide_resize > 0) {
            j["a"] = slide_relpath(p.a.class_label, p.a.source_slide).generic_string();
            j["b"] = slide_relpath(p.b_source.class_label, p.b_source.source_slide).generic_string();
            j["resize"] = slide_resize;
        } else {
            j["a"] = patch_relpath(p.a).generic_string();
            j["b"] = patch_relpath(p.b_source).generic_string();
        }
        j["label"] = p.label;
        j["level"] = std::string(to_string(p.level));
        j["seed"] = p.seed;
        out << j.dump() << "\n";
    }
}

/// Rebuilds pairs from a manifest, re-deriving each augmented member from its seed.
inline std::vector<PairSample> read_pair_manifest(const fs::path& path, const fs::path& root, const AugConfig& aug)
{
    std::ifstream in(path);
    if (!in) {
        throw DependencyError("no pair manifest at " + path.string());
    }
    int stride = 0;
    std::vector<PairSample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto j = nlohmann::json::parse(line);
        auto load = [&](const std::string& rel) {
            if (j.contains("resize")) {
                const int size = j.at("resize").get<int>();
                Patch p;
                const fs::path r(rel);
                p.pixels = resize_bilinear(read_png(root / r), size, size);
                p.source_slide = r.stem().string();
                p.class_label = r.parent_path().filename().string();
                return p;
            }
            if (stride == 0) {
                stride = read_patch_index(root).stride;
            }
            return load_patch(root, rel, stride);
        };
        PairSample p;
        p.a = load(j.at("a").get<std::string>());
        p.b_source = load(j.at("b").get<std::string>());
        p.seed = j.at("seed").get<std::uint64_t>();
        p.level = level_from_string(j.at("level").get<std::string>());
        p.label = j.at("label").get<int>();
        if (p.label != label_for(p.level)) {
            throw InvalidInput("manifest line has label inconsistent with its level");
        }
        p.b = p.b_source;
        p.b.pixels = augment(p.b_source.pixels, aug, p.seed);
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace simgan::corpus
