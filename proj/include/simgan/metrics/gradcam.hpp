#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "simgan/core/error.hpp"
#include "simgan/core/image.hpp"
#include "simgan/snn/extractor.hpp"

namespace simgan::metrics {

struct Heatmap {
    int height = 0;
    int width = 0;
    std::vector<double> values; ///< row-major

    [[nodiscard]] double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Grad-CAM at the output of encoder layer `layer_index`. The target score is
/// half the squared norm of the pooled embedding. Degenerate maps (no positive
/// evidence) come back as all zeros.
inline Heatmap grad_cam(const snn::LayeredExtractor& extractor, const Image& image, int layer_index)
{
    if (!extractor.is_encoder_layer(layer_index)) {
        throw InvalidInput("grad_cam: layer " + std::to_string(layer_index) + " is not a convolutional encoder layer");
    }
    snn::LayeredExtractor f = extractor;
    f.set_all_trainable(false);
    const Tensor x = to_batch(std::span<const Image>(&image, 1));
    f.check_input(x.h(), x.w());

    Tensor h = x;
    Tensor act;
    for (int i = 0; i < f.encoder_count(); ++i) {
        h = f.layer(i).forward(h);
        if (i == layer_index) {
            act = h;
        }
    }
    const Eigen::MatrixXd e = snn::LayeredExtractor::pool(h);
    Tensor grad(1, h.c(), h.h(), h.w());
    const int plane = h.h() * h.w();
    for (int c = 0; c < h.c(); ++c) {
        const float g = static_cast<float>(e(0, c) / plane);
        std::fill_n(grad.sample(0) + static_cast<std::size_t>(c) * plane, plane, g);
    }
    const Tensor dact = layer_index + 1 < f.encoder_count()
                            ? f.backward_range(layer_index + 1, f.encoder_count(), grad, true)
                            : grad;

    Heatmap hm;
    hm.height = act.h();
    hm.width = act.w();
    const int aplane = act.h() * act.w();
    hm.values.assign(static_cast<std::size_t>(aplane), 0.0);
    for (int c = 0; c < act.c(); ++c) {
        const float* g = dact.sample(0) + static_cast<std::size_t>(c) * aplane;
        double alpha = 0.0;
        for (int i = 0; i < aplane; ++i) {
            alpha += g[i];
        }
        alpha /= aplane;
        const float* a = act.sample(0) + static_cast<std::size_t>(c) * aplane;
        for (int i = 0; i < aplane; ++i) {
            hm.values[static_cast<std::size_t>(i)] += alpha * a[i];
        }
    }
    double peak = 0.0;
    for (double& v : hm.values) {
        v = std::max(0.0, v);
        peak = std::max(peak, v);
    }
    for (double& v : hm.values) {
        v = peak > 0 ? v / peak : 0.0;
    }
    return hm;
}

} // namespace simgan::metrics
