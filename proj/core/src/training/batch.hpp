#pragma once

// Per-example loss and gradient on top of the internal decoder kernels.

#include <cmath>

#include "../transformer/engine.hpp"
#include "gatescope/training/loss.hpp"

namespace gatescope::training::detail {

using transformer::detail::Engine;
using transformer::detail::Mat;
using transformer::detail::Workspace;

/// Runs the forward pass and returns the summed cross-entropy over the
/// example's targets. If grad is non-null, accumulates scale * dLoss/dParams.
template <typename T>
double example_loss(const Engine<T>& engine, const Example& ex, Workspace<T>& ws, T* grad, double scale) {
    const auto& c = engine.config();
    const std::size_t S = ex.tokens.size();
    const std::size_t V = c.vocab_size;
    const auto masks = ex.knockout.layer_masks(c.n_layers, S);
    engine.forward(ex.tokens.ids, masks, transformer::PatchSpec{}, ws);

    double total = 0.0;
    Mat<T> dlogits;
    if (grad) dlogits = Mat<T>::Zero(S, V);
    for (std::size_t t = 1; t < S; ++t) {
        if (!ex.loss_mask[t]) continue;
        const auto row = ws.logits.row(t - 1);
        double mx = -INFINITY;
        for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(row(v)));
        double z = 0.0;
        for (std::size_t v = 0; v < V; ++v) z += std::exp(static_cast<double>(row(v)) - mx);
        const double lse = mx + std::log(z);
        const auto target = static_cast<std::size_t>(ex.tokens.ids[t]);
        total += lse - static_cast<double>(row(target));
        if (grad) {
            for (std::size_t v = 0; v < V; ++v)
                dlogits(t - 1, v) = static_cast<T>(scale * std::exp(static_cast<double>(row(v)) - lse));
            dlogits(t - 1, target) -= static_cast<T>(scale);
        }
    }
    if (grad) engine.backward(ws, dlogits, grad);
    return total;
}

}  // namespace gatescope::training::detail
