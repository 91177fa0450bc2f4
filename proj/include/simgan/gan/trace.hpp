#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/error.hpp"

namespace simgan::gan {

struct TraceRecord {
    long iter = 0;
    int epoch = 0;
    double l_d = 0.0;
    double reward = 0.0;
    double l_d_mod = 0.0;
    double l_g = 0.0;
    double mean_sim = 0.0;
    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct EpochMean {
    int epoch = 0;
    double l_d = 0.0;
    double reward = 0.0;
    double l_d_mod = 0.0;
    double l_g = 0.0;
    double mean_sim = 0.0;
};

inline constexpr const char* kTraceHeader = "iter,epoch,l_d,reward,l_d_mod,l_g,mean_sim";

struct RewardTrace {
    std::vector<TraceRecord> records;

    [[nodiscard]] std::vector<EpochMean> epoch_means() const
    {
        std::map<int, std::pair<EpochMean, int>> acc;
        for (const auto& r : records) {
            auto& [m, n] = acc[r.epoch];
            m.epoch = r.epoch;
            m.l_d += r.l_d;
            m.reward += r.reward;
            m.l_d_mod += r.l_d_mod;
            m.l_g += r.l_g;
            m.mean_sim += r.mean_sim;
            ++n;
        }
        std::vector<EpochMean> out;
        for (auto& [e, mn] : acc) {
            auto [m, n] = mn;
            m.l_d /= n;
            m.reward /= n;
            m.l_d_mod /= n;
            m.l_g /= n;
            m.mean_sim /= n;
            out.push_back(m);
        }
        return out;
    }

    /// Doubles are written with 17 significant digits so they round-trip exactly.
    void write_csv(const std::filesystem::path& path) const
    {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        std::ofstream out(path, std::ios::trunc);
        if (!out) {
            throw DependencyError("cannot write " + path.string());
        }
        out << kTraceHeader << "\n";
        char line[512];
        for (const auto& r : records) {
            std::snprintf(line, sizeof(line), "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.epoch, r.l_d,
                          r.reward, r.l_d_mod, r.l_g, r.mean_sim);
            out << line;
        }
    }

    static RewardTrace read_csv(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw DependencyError("no reward trace at " + path.string());
        }
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse_csv(text, path.string());
    }

    /// Like read_csv, but ignores a trailing line still being appended.
    static RewardTrace read_csv_snapshot(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw DependencyError("no reward trace at " + path.string());
        }
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto last = text.rfind('\n');
        text.resize(last == std::string::npos ? 0 : last + 1);
        if (text.empty()) {
            return {};
        }
        return parse_csv(text, path.string());
    }

    static RewardTrace parse_csv(const std::string& text, const std::string& origin = "<memory>")
    {
        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        if (line != kTraceHeader) {
            throw InvalidInput("reward trace header mismatch in " + origin);
        }
        RewardTrace t;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            TraceRecord r;
            if (std::sscanf(line.c_str(), "%ld,%d,%lf,%lf,%lf,%lf,%lf", &r.iter, &r.epoch, &r.l_d, &r.reward,
                            &r.l_d_mod, &r.l_g, &r.mean_sim)
                != 7) {
                throw InvalidInput("malformed reward trace row: " + line);
            }
            t.records.push_back(r);
        }
        return t;
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : records) {
            arr.push_back({{"iter", r.iter},
                           {"epoch", r.epoch},
                           {"l_d", r.l_d},
                           {"reward", r.reward},
                           {"l_d_mod", r.l_d_mod},
                           {"l_g", r.l_g},
                           {"mean_sim", r.mean_sim}});
        }
        return arr;
    }
};

} // namespace simgan::gan
