#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gatescope/transformer/forward.hpp"

namespace gatescope::transformer {

/// f^l_j: share of the text-to-image-span attention received by position
/// j <= n_eoi at layer l, averaged over heads and summed over text queries
/// i > n_eoi, normalized so each layer sums to one.
struct AttentionProfile {
    std::size_t n_eoi = 0;
    /// share[l][j], j = 0..n_eoi.
    std::vector<std::vector<double>> share;
    /// False where no attention mass reaches the image span (only under knockout).
    std::vector<bool> defined;
};

AttentionProfile cross_modal_attention_profile(const ForwardTrace& trace, std::size_t n_eoi);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> output_distribution(const ForwardTrace& trace, std::size_t position);

/// sum_i min(q_i, p_i); both inputs must be distributions (sum 1 within 1e-4).
double distribution_similarity(std::span<const double> q, std::span<const double> p);

struct DecodeMode {
    enum class Kind { Greedy, Temperature };
    Kind kind = Kind::Greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    static DecodeMode greedy() { return {}; }
    static DecodeMode sample(double temperature, std::uint64_t seed) { return {Kind::Temperature, temperature, seed}; }
};

struct GenerateOptions {
    DecodeMode mode;
    /// Re-resolved against the growing sequence at every step.
    KnockoutRule knockout;
    /// Tags appended tokens; defaults to Modality::Text. An image tag is
    /// downgraded to Special since appended tokens follow [EOI].
    std::function<Modality(TokenId)> tag;
    std::optional<TokenId> stop_token;
};

/// Autoregressive decoding without a KV cache.
TokenSequence generate(const Weights& weights, const TokenSequence& tokens, std::size_t max_new,
                       const GenerateOptions& options = {});

}  // namespace gatescope::transformer
