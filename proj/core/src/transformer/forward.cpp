#include "gatescope/transformer/forward.hpp"

#include "engine.hpp"
#include "gatescope/common/error.hpp"

namespace gatescope::transformer {

ForwardTrace::ForwardTrace(std::size_t seq_len, std::size_t n_layers, std::size_t n_heads, std::size_t d_model,
                           std::size_t vocab_size, CaptureFlags capture)
    : seq_len_(seq_len), n_layers_(n_layers), n_heads_(n_heads), d_model_(d_model), vocab_size_(vocab_size) {
    if (capture.residual) {
        residual_.assign((n_layers + 1) * seq_len * d_model, 0.0);
        final_hidden_.assign(seq_len * d_model, 0.0);
    }
    if (capture.attention) attention_.assign(n_layers * n_heads * seq_len * seq_len, 0.0);
    logits_.assign(seq_len * vocab_size, 0.0);
}

std::span<const double> ForwardTrace::residual(std::size_t layer, std::size_t position) const {
    require(has_residual(), "trace was captured without residual states");
    require(layer <= n_layers_ && position < seq_len_, "residual index out of range");
    return {residual_.data() + (layer * seq_len_ + position) * d_model_, d_model_};
}

std::span<double> ForwardTrace::residual(std::size_t layer, std::size_t position) {
    require(has_residual(), "trace was captured without residual states");
    require(layer <= n_layers_ && position < seq_len_, "residual index out of range");
    return {residual_.data() + (layer * seq_len_ + position) * d_model_, d_model_};
}

std::span<const double> ForwardTrace::final_hidden(std::size_t position) const {
    require(has_residual() && position < seq_len_, "final hidden index out of range");
    return {final_hidden_.data() + position * d_model_, d_model_};
}

std::span<double> ForwardTrace::final_hidden(std::size_t position) {
    require(has_residual() && position < seq_len_, "final hidden index out of range");
    return {final_hidden_.data() + position * d_model_, d_model_};
}

double ForwardTrace::attention(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) const {
    return attention_[((layer * n_heads_ + head) * seq_len_ + query) * seq_len_ + key];
}

double& ForwardTrace::attention(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) {
    return attention_[((layer * n_heads_ + head) * seq_len_ + query) * seq_len_ + key];
}

std::span<const double> ForwardTrace::logits(std::size_t position) const {
    require(position < seq_len_, "logit row out of range");
    return {logits_.data() + position * vocab_size_, vocab_size_};
}

std::span<double> ForwardTrace::logits(std::size_t position) {
    require(position < seq_len_, "logit row out of range");
    return {logits_.data() + position * vocab_size_, vocab_size_};
}

namespace {

void check_inputs(const Weights& weights, const TokenSequence& tokens) {
    const auto& c = weights.config;
    require(weights.values.size() == ParameterLayout(c).total(), "weights do not match the model config");
    tokens.validate(c.max_seq_len);
    for (TokenId id : tokens.ids) {
        require(id >= 0 && static_cast<std::size_t>(id) < c.vocab_size, "token id outside the vocabulary");
    }
}

void run(const Weights& weights, const TokenSequence& tokens, const KnockoutSpec& knockout, const PatchSpec& patch,
         detail::Workspace<float>& ws) {
    check_inputs(weights, tokens);
    const auto& c = weights.config;
    const auto masks = knockout.layer_masks(c.n_layers, tokens.size());
    patch.validate(c.n_layers, tokens.size(), c.d_model);
    detail::Engine<float> engine(c, weights.values.data());
    engine.forward(tokens.ids, masks, patch, ws);
}

}  // namespace

ForwardTrace forward(const Weights& weights, const TokenSequence& tokens, const Interventions& interventions) {
    detail::Workspace<float> ws;
    run(weights, tokens, interventions.knockout, interventions.patch, ws);
    const auto& c = weights.config;
    const std::size_t S = tokens.size();
    ForwardTrace trace(S, c.n_layers, c.n_heads, c.d_model, c.vocab_size, interventions.capture);
    if (interventions.capture.residual) {
        for (std::size_t l = 0; l <= c.n_layers; ++l) {
            const auto& x = l < c.n_layers ? ws.layers[l].x_in : ws.x_final;
            for (std::size_t i = 0; i < S; ++i) {
                auto dst = trace.residual(l, i);
                for (std::size_t k = 0; k < c.d_model; ++k) dst[k] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            }
        }
        for (std::size_t i = 0; i < S; ++i) {
            auto dst = trace.final_hidden(i);
            for (std::size_t k = 0; k < c.d_model; ++k) dst[k] = ws.h_f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        }
    }
    if (interventions.capture.attention) {
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            for (std::size_t h = 0; h < c.n_heads; ++h) {
                const auto& p = ws.layers[l].probs[h];
                for (std::size_t i = 0; i < S; ++i) {
                    for (std::size_t j = 0; j < S; ++j) {
                        trace.attention(l, h, i, j) = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < S; ++i) {
        auto dst = trace.logits(i);
        for (std::size_t v = 0; v < c.vocab_size; ++v) dst[v] = ws.logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v));
    }
    return trace;
}

std::vector<float> forward_logits(const Weights& weights, const TokenSequence& tokens, const KnockoutSpec& knockout,
                                  const PatchSpec& patch) {
    detail::Workspace<float> ws;
    run(weights, tokens, knockout, patch, ws);
    return std::vector<float>(ws.logits.data(), ws.logits.data() + ws.logits.size());
}

}  // namespace gatescope::transformer
