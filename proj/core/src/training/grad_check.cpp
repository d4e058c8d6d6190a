#include "gatescope/training/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "batch.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/rng.hpp"

namespace gatescope::training {

namespace {

void check_batch(const transformer::Weights& weights, std::span<const Example> batch) {
    const auto& c = weights.config;
    require(weights.values.size() == transformer::ParameterLayout(c).total(), "weights do not match the model config");
    for (const auto& ex : batch) {
        ex.tokens.validate(c.max_seq_len);
        require(ex.loss_mask.size() == ex.tokens.size(), "loss mask and tokens are not aligned");
        for (TokenId id : ex.tokens.ids)
            require(id >= 0 && static_cast<std::size_t>(id) < c.vocab_size, "token id outside the vocabulary");
    }
}

double objective(const transformer::ModelConfig& config, const std::vector<double>& params,
                 std::span<const Example> batch, double scale, std::vector<double>* grad) {
    detail::Engine<double> engine(config, params.data());
    detail::Workspace<double> ws;
    const std::size_t n = target_count(batch);
    const double per_target = scale / static_cast<double>(std::max<std::size_t>(n, 1));
    double total = 0.0;
    for (const auto& ex : batch)
        total += detail::example_loss(engine, ex, ws, grad ? grad->data() : nullptr, per_target);
    return total * per_target;
}

}  // namespace

LossGradient loss_and_gradient(const transformer::Weights& weights, std::span<const Example> batch, double scale) {
    check_batch(weights, batch);
    const std::vector<double> params(weights.values.begin(), weights.values.end());
    LossGradient out;
    out.n_targets = target_count(batch);
    out.gradient.assign(params.size(), 0.0);
    out.loss = objective(weights.config, params, batch, scale, &out.gradient);
    return out;
}

GradCheckResult grad_check(const transformer::Weights& weights, std::span<const Example> batch,
                           GradCheckOptions options) {
    require(options.epsilon > 0.0, "finite-difference step must be positive");
    check_batch(weights, batch);
    const transformer::ParameterLayout layout(weights.config);
    std::vector<double> params(weights.values.begin(), weights.values.end());
    std::vector<double> analytic(params.size(), 0.0);
    objective(weights.config, params, batch, 1.0, &analytic);

    Rng rng(derive_seed(options.seed, 0x67c));
    std::vector<std::size_t> picks;
    for (const auto& t : layout.tensors()) picks.push_back(t.offset + uniform_index(rng, t.size));
    std::vector<std::size_t> all(params.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), rng);
    for (std::size_t idx : all) {
        if (picks.size() >= std::max(options.n_params, layout.tensors().size())) break;
        if (std::find(picks.begin(), picks.end(), idx) == picks.end()) picks.push_back(idx);
    }

    GradCheckResult result;
    for (std::size_t idx : picks) {
        const double saved = params[idx];
        params[idx] = saved + options.epsilon;
        const double up = objective(weights.config, params, batch, 1.0, nullptr);
        params[idx] = saved - options.epsilon;
        const double down = objective(weights.config, params, batch, 1.0, nullptr);
        params[idx] = saved;
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double a = analytic[idx];
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.abs_floor});
        ++result.n_checked;
        if (rel >= result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = idx;
            result.worst_analytic = a;
            result.worst_numeric = numeric;
            for (const auto& t : layout.tensors())
                if (idx >= t.offset && idx < t.offset + t.size) result.worst_tensor = t.name;
        }
    }
    return result;
}

}  // namespace gatescope::training
