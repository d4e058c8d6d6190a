#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gatescope/training/loss.hpp"
#include "gatescope/transformer/model.hpp"

namespace gatescope::training {

/// Batch objective and its analytic gradient, computed in double precision.
/// The objective is scale * (summed target cross-entropy) / max(targets, 1),
/// so a batch without targets has zero loss and zero gradient.
struct LossGradient {
    double loss = 0.0;
    std::size_t n_targets = 0;
    std::vector<double> gradient;
};

LossGradient loss_and_gradient(const transformer::Weights& weights, std::span<const Example> batch,
                               double scale = 1.0);

struct GradCheckOptions {
    double epsilon = 1e-4;
    /// At least one parameter per tensor, the rest uniformly without replacement.
    std::size_t n_params = 256;
    std::uint64_t seed = 0;
    /// Gradients smaller than this are compared on an absolute scale.
    double abs_floor = 1e-8;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t n_checked = 0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central finite differences against the analytic double-precision gradient;
/// relative error |a - n| / max(|a|, |n|, abs_floor).
GradCheckResult grad_check(const transformer::Weights& weights, std::span<const Example> batch,
                           GradCheckOptions options = {});

}  // namespace gatescope::training
