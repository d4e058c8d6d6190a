#include "gatescope/transformer/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gatescope/common/error.hpp"
#include "gatescope/common/rng.hpp"

namespace gatescope::transformer {

AttentionProfile cross_modal_attention_profile(const ForwardTrace& trace, std::size_t n_eoi) {
    require(trace.has_attention(), "trace was captured without attention");
    require(n_eoi + 1 < trace.seq_len(), "attention profile needs at least one text position after [EOI]");
    AttentionProfile out;
    out.n_eoi = n_eoi;
    out.share.assign(trace.n_layers(), std::vector<double>(n_eoi + 1, 0.0));
    out.defined.assign(trace.n_layers(), false);
    const double inv_heads = 1.0 / static_cast<double>(trace.n_heads());
    for (std::size_t l = 0; l < trace.n_layers(); ++l) {
        auto& f = out.share[l];
        for (std::size_t h = 0; h < trace.n_heads(); ++h) {
            for (std::size_t i = n_eoi + 1; i < trace.seq_len(); ++i) {
                for (std::size_t j = 0; j <= n_eoi; ++j) f[j] += trace.attention(l, h, i, j);
            }
        }
        for (auto& v : f) v *= inv_heads;
        const double total = std::accumulate(f.begin(), f.end(), 0.0);
        if (total > 0.0) {
            for (auto& v : f) v /= total;
            out.defined[l] = true;
        }
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax of an empty vector");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<double> output_distribution(const ForwardTrace& trace, std::size_t position) {
    return softmax(trace.logits(position));
}

double distribution_similarity(std::span<const double> q, std::span<const double> p) {
    require(q.size() == p.size(), "distribution similarity: length mismatch");
    const auto check = [](std::span<const double> d) {
        double s = 0.0;
        for (double v : d) {
            require(v >= 0.0 && std::isfinite(v), "distribution similarity: negative or non-finite probability");
            s += v;
        }
        require(std::abs(s - 1.0) <= 1e-4, "distribution similarity: input does not sum to 1");
    };
    check(q);
    check(p);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += std::min(q[i], p[i]);
    return s;
}

TokenSequence generate(const Weights& weights, const TokenSequence& tokens, std::size_t max_new,
                       const GenerateOptions& options) {
    const auto& c = weights.config;
    tokens.validate(c.max_seq_len);
    require(tokens.size() + max_new <= c.max_seq_len, "generation would overflow max_seq_len");
    if (options.mode.kind == DecodeMode::Kind::Temperature) {
        require(options.mode.temperature > 0.0, "sampling temperature must be positive");
    }
    TokenSequence seq = tokens;
    Rng rng(options.mode.seed);
    for (std::size_t step = 0; step < max_new; ++step) {
        const auto knockout = options.knockout.resolve(seq.size(), seq.n_eoi, c.n_layers);
        const auto logits = forward_logits(weights, seq, knockout);
        const float* last = logits.data() + (seq.size() - 1) * c.vocab_size;
        TokenId next = 0;
        if (options.mode.kind == DecodeMode::Kind::Greedy) {
            next = static_cast<TokenId>(std::max_element(last, last + c.vocab_size) - last);
        } else {
            std::vector<double> scaled(c.vocab_size);
            for (std::size_t v = 0; v < c.vocab_size; ++v) scaled[v] = static_cast<double>(last[v]) / options.mode.temperature;
            const auto p = softmax(scaled);
            std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
            next = static_cast<TokenId>(pick(rng));
        }
        seq.ids.push_back(next);
        // Appended tokens follow [EOI], where the image tag is not admissible.
        Modality tag = options.tag ? options.tag(next) : Modality::Text;
        if (tag == Modality::Image) tag = Modality::Special;
        seq.modality.push_back(tag);
        if (options.stop_token && next == *options.stop_token) break;
    }
    return seq;
}

}  // namespace gatescope::transformer
