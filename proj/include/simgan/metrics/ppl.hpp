#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/core/random.hpp"
#include "simgan/gan/models.hpp"
#include "simgan/snn/extractor.hpp"

namespace simgan::metrics {

struct PplParams {
    int n_paths = 128;
    int steps = 10;
    bool normalize = true;
};

/// Latent endpoints (z1, z2) of each path, drawn from N(0, I).
inline std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> ppl_endpoints(int latent_dim, int n_paths,
                                                                              std::uint64_t seed)
{
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> out;
    out.reserve(static_cast<std::size_t>(n_paths));
    for (int p = 0; p < n_paths; ++p) {
        Rng rng = make_rng(seed, "ppl-path", static_cast<std::uint64_t>(p));
        Eigen::VectorXd a(latent_dim);
        Eigen::VectorXd b(latent_dim);
        for (int i = 0; i < latent_dim; ++i) {
            a(i) = normal(rng);
        }
        for (int i = 0; i < latent_dim; ++i) {
            b(i) = normal(rng);
        }
        out.emplace_back(std::move(a), std::move(b));
    }
    return out;
}

inline std::vector<Eigen::VectorXd> interpolants(const Eigen::VectorXd& z1, const Eigen::VectorXd& z2, int steps)
{
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        out.push_back((1.0 - t) * z1 + t * z2);
    }
    return out;
}

namespace detail {

inline double path_length(std::vector<Eigen::VectorXd> emb, bool normalize)
{
    if (normalize) {
        for (auto& e : emb) {
            const double n = e.norm();
            if (n > 0) {
                e /= n;
            }
        }
    }
    double total = 0.0;
    for (std::size_t i = 1; i < emb.size(); ++i) {
        total += (emb[i] - emb[i - 1]).squaredNorm();
    }
    return total;
}

inline void check_params(const PplParams& p)
{
    if (p.steps < 1 || p.n_paths < 1) {
        throw InvalidInput("ppl: steps and n_paths must be >= 1");
    }
}

} // namespace detail

/// Perceptual path length for any latent -> output map `gen` and output ->
/// embedding map `embed`.
template <class GenFn, class EmbedFn>
double ppl(GenFn&& gen, EmbedFn&& embed, int latent_dim, const PplParams& params, std::uint64_t seed)
{
    detail::check_params(params);
    double total = 0.0;
    for (const auto& [z1, z2] : ppl_endpoints(latent_dim, params.n_paths, seed)) {
        std::vector<Eigen::VectorXd> emb;
        for (const auto& z : interpolants(z1, z2, params.steps)) {
            emb.push_back(embed(gen(z)));
        }
        total += detail::path_length(std::move(emb), params.normalize);
    }
    return total / params.n_paths;
}

/// PPL of a DCGAN generator measured with an extractor; one batch per path.
/// Generated images are resized to `input_size` when it differs.
inline double ppl(const gan::Generator& gen, const snn::LayeredExtractor& extractor, const PplParams& params,
                  std::uint64_t seed, int input_size = 0)
{
    detail::check_params(params);
    const int size = input_size > 0 ? input_size : gen.image_size;
    extractor.check_input(size, size);
    double total = 0.0;
    for (const auto& [z1, z2] : ppl_endpoints(gen.latent_dim, params.n_paths, seed)) {
        const auto zs = interpolants(z1, z2, params.steps);
        Tensor z(static_cast<int>(zs.size()), gen.latent_dim, 1, 1);
        for (std::size_t i = 0; i < zs.size(); ++i) {
            float* p = z.sample(static_cast<int>(i));
            for (int k = 0; k < gen.latent_dim; ++k) {
                p[k] = static_cast<float>(zs[i](k));
            }
        }
        const Tensor y = gen.net.infer(z);
        std::vector<Image> imgs;
        for (int i = 0; i < y.n(); ++i) {
            Image img = from_batch(y, i, -1.0f, 1.0f);
            imgs.push_back(img.height() == size ? std::move(img) : resize_bilinear(img, size, size));
        }
        const Eigen::MatrixXd e = extractor.embed(std::span<const Image>(imgs));
        std::vector<Eigen::VectorXd> emb;
        for (Eigen::Index r = 0; r < e.rows(); ++r) {
            emb.emplace_back(e.row(r).transpose());
        }
        total += detail::path_length(std::move(emb), params.normalize);
    }
    return total / params.n_paths;
}

} // namespace simgan::metrics
