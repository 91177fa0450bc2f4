#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <concepts>
#include <string>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"

namespace simgan::snn {

template <typename E>
concept Embedder = requires(const E& e, const Image& img, int h, int w) {
    { e.embed(img) } -> std::convertible_to<Eigen::VectorXd>;
    { e.accepts(h, w) } -> std::convertible_to<bool>;
};

/// Cosine similarity of two embeddings clamped to [0, 1].
inline double score_embeddings(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    if (a.size() != b.size()) {
        throw InvalidInput("score: embedding sizes differ");
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DegenerateEmbedding("score: zero-norm embedding");
    }
    const double cos = a.dot(b) / (na * nb);
    return std::clamp(cos, 0.0, 1.0);
}

template <Embedder E>
double score_pair(const E& extractor, const Image& a, const Image& b)
{
    if (a.height() != b.height() || a.width() != b.width()) {
        throw InvalidInput("score_pair: images differ in size");
    }
    if (!extractor.accepts(a.height(), a.width())) {
        throw InvalidInput("score_pair: extractor does not accept " + std::to_string(a.height()) + "x"
                           + std::to_string(a.width()));
    }
    return score_embeddings(extractor.embed(a), extractor.embed(b));
}

} // namespace simgan::snn
