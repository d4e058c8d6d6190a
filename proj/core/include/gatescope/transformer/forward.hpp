#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gatescope/transformer/interventions.hpp"
#include "gatescope/transformer/model.hpp"
#include "gatescope/transformer/tokens.hpp"

namespace gatescope::transformer {

struct CaptureFlags {
    bool residual = true;
    bool attention = true;
};

struct Interventions {
    KnockoutSpec knockout;
    PatchSpec patch;
    CaptureFlags capture;
};

/// Everything one forward pass exposes for analysis, widened to double.
///
/// residual(l) for l < n_layers is the input of block l; residual(n_layers)
/// is the stream leaving the last block (input of the final norm), and
/// final_hidden is the post-norm state fed to the unembedding.
class ForwardTrace {
public:
    ForwardTrace() = default;
    ForwardTrace(std::size_t seq_len, std::size_t n_layers, std::size_t n_heads, std::size_t d_model,
                 std::size_t vocab_size, CaptureFlags capture);

    std::size_t seq_len() const { return seq_len_; }
    std::size_t n_layers() const { return n_layers_; }
    std::size_t n_heads() const { return n_heads_; }
    std::size_t d_model() const { return d_model_; }
    std::size_t vocab_size() const { return vocab_size_; }
    bool has_residual() const { return !residual_.empty(); }
    bool has_attention() const { return !attention_.empty(); }

    std::span<const double> residual(std::size_t layer, std::size_t position) const;
    std::span<double> residual(std::size_t layer, std::size_t position);
    std::span<const double> final_hidden(std::size_t position) const;
    std::span<double> final_hidden(std::size_t position);
    double attention(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) const;
    double& attention(std::size_t layer, std::size_t head, std::size_t query, std::size_t key);
    std::span<const double> logits(std::size_t position) const;
    std::span<double> logits(std::size_t position);

private:
    std::size_t seq_len_ = 0;
    std::size_t n_layers_ = 0;
    std::size_t n_heads_ = 0;
    std::size_t d_model_ = 0;
    std::size_t vocab_size_ = 0;
    std::vector<double> residual_;
    std::vector<double> final_hidden_;
    std::vector<double> attention_;
    std::vector<double> logits_;
};

/// Pre-norm decoder: x += MHA(LN(x)); x += MLP(LN(x)) per block, final LN,
/// untied unembedding. Computed in float32, bitwise deterministic.
ForwardTrace forward(const Weights& weights, const TokenSequence& tokens, const Interventions& interventions = {});

/// Only the logits, skipping trace capture.
std::vector<float> forward_logits(const Weights& weights, const TokenSequence& tokens,
                                  const KnockoutSpec& knockout = {}, const PatchSpec& patch = {});

}  // namespace gatescope::transformer
