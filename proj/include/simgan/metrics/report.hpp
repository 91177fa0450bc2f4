#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/gan/models.hpp"
#include "simgan/metrics/fid.hpp"
#include "simgan/metrics/kid.hpp"
#include "simgan/metrics/ppl.hpp"
#include "simgan/metrics/precision_recall.hpp"
#include "simgan/snn/extractor.hpp"

namespace simgan::metrics {

struct MetricReport {
    double fid = 0.0;
    double kid = 0.0;
    double ppl = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long n_real = 0;
    long n_fake = 0;
    std::string extractor_digest;
    std::uint64_t seed = 0;

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"fid", fid},       {"kid", kid},       {"ppl", ppl},       {"precision", precision},
                {"recall", recall}, {"f1", f1},         {"n_real", n_real}, {"n_fake", n_fake},
                {"extractor_digest", extractor_digest}, {"seed", seed}};
    }

    static MetricReport from_json(const nlohmann::json& j)
    {
        MetricReport r;
        r.fid = j.at("fid").get<double>();
        r.kid = j.at("kid").get<double>();
        r.ppl = j.at("ppl").get<double>();
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.f1 = j.at("f1").get<double>();
        r.n_real = j.at("n_real").get<long>();
        r.n_fake = j.at("n_fake").get<long>();
        r.extractor_digest = j.at("extractor_digest").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        return r;
    }

    [[nodiscard]] bool valid() const
    {
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        return std::isfinite(fid) && std::isfinite(kid) && std::isfinite(ppl) && unit(precision) && unit(recall)
               && unit(f1);
    }
};

/// Two reports are comparable only under the same extractor, sample counts and seed.
inline bool comparable(const MetricReport& a, const MetricReport& b)
{
    return a.extractor_digest == b.extractor_digest && a.n_real == b.n_real && a.n_fake == b.n_fake
           && a.seed == b.seed;
}

inline void require_comparable(const MetricReport& a, const MetricReport& b)
{
    if (!comparable(a, b)) {
        throw InvalidInput("metric reports differ in extractor, sample counts or seed");
    }
}

struct EvalConfig {
    int n_real = 256;
    int n_fake = 256;
    PplParams ppl;
    int k = 3;
    int kid_blocks = 1;
    int kid_block_size = 0;
    int input_size = 64; ///< both sets are resized to this before embedding

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"n_real", n_real},
                {"n_fake", n_fake},
                {"ppl_paths", ppl.n_paths},
                {"ppl_steps", ppl.steps},
                {"ppl_normalize", ppl.normalize},
                {"k", k},
                {"kid_blocks", kid_blocks},
                {"kid_block_size", kid_block_size},
                {"input_size", input_size}};
    }

    static EvalConfig from_json(const nlohmann::json& j)
    {
        EvalConfig c;
        c.n_real = j.value("n_real", c.n_real);
        c.n_fake = j.value("n_fake", c.n_fake);
        c.ppl.n_paths = j.value("ppl_paths", c.ppl.n_paths);
        c.ppl.steps = j.value("ppl_steps", c.ppl.steps);
        c.ppl.normalize = j.value("ppl_normalize", c.ppl.normalize);
        c.k = j.value("k", c.k);
        c.kid_blocks = j.value("kid_blocks", c.kid_blocks);
        c.kid_block_size = j.value("kid_block_size", c.kid_block_size);
        c.input_size = j.value("input_size", c.input_size);
        return c;
    }

    void validate() const
    {
        if (n_real < 2 || n_fake < 2 || k < 1 || k >= n_real || k >= n_fake || ppl.n_paths < 1 || ppl.steps < 1
            || input_size < 1) {
            throw ConfigError("metrics: n_real/n_fake >= 2, 1 <= k < counts, ppl paths/steps >= 1 required");
        }
    }
};

inline std::vector<Image> resized(std::span<const Image> images, int size)
{
    std::vector<Image> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        out.push_back(img.height() == size && img.width() == size ? img : resize_bilinear(img, size, size));
    }
    return out;
}

/// Full metric battery for a generator against real patches. The first
/// `n_real` real images are used; `n_fake` images are sampled under `seed`.
inline MetricReport evaluate(std::span<const Image> real, const gan::Generator& gen,
                             const snn::LayeredExtractor& extractor, const EvalConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    if (static_cast<int>(real.size()) < cfg.n_real) {
        throw InvalidInput("evaluate: fewer real images than n_real");
    }
    extractor.check_input(cfg.input_size, cfg.input_size);
    const auto real_in = resized(real.first(static_cast<std::size_t>(cfg.n_real)), cfg.input_size);
    const auto fake_in = resized(gan::sample(gen, cfg.n_fake, seed), cfg.input_size);
    const Eigen::MatrixXd er = extractor.embed(std::span<const Image>(real_in));
    const Eigen::MatrixXd ef = extractor.embed(std::span<const Image>(fake_in));

    MetricReport r;
    r.fid = fid(feature_stats(er), feature_stats(ef));
    r.kid = kid_blocks(er, ef, cfg.kid_blocks, cfg.kid_block_size, seed);
    r.ppl = ppl(gen, extractor, cfg.ppl, seed, cfg.input_size);
    const PrecisionRecall pr = gen_precision_recall(er, ef, cfg.k);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.f1 = pr.f1;
    r.n_real = cfg.n_real;
    r.n_fake = cfg.n_fake;
    r.extractor_digest = extractor.digest();
    r.seed = seed;
    return r;
}

} // namespace simgan::metrics
