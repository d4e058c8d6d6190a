#include "gatescope/training/evaluate.hpp"

#include <cmath>

#include "gatescope/common/error.hpp"
#include "gatescope/common/parallel.hpp"
#include "gatescope/transformer/forward.hpp"

namespace gatescope::training {

namespace {

struct DocResult {
    int correct = -1;
    int caption_match = -1;
    double loss_sum = 0.0;
    std::size_t targets = 0;
};

std::size_t argmax(std::span<const float> row) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < row.size(); ++v)
        if (row[v] > row[best]) best = v;
    return best;
}

}  // namespace

transformer::TokenId predicted_class_token(std::span<const float> logits_row, const tasks::Vocabulary& vocab) {
    transformer::TokenId best = vocab.class_name(0);
    for (std::size_t c = 1; c < vocab.n_classes(); ++c) {
        const transformer::TokenId id = vocab.class_name(c);
        if (logits_row[static_cast<std::size_t>(id)] > logits_row[static_cast<std::size_t>(best)]) best = id;
    }
    return best;
}

EvalMetrics evaluate(const transformer::Weights& weights, const std::vector<tasks::Document>& docs,
                     const tasks::Vocabulary& vocab, const transformer::KnockoutRule& knockout, EvalOptions options) {
    require(weights.config.vocab_size == vocab.size(), "model and corpus vocabularies differ");
    const std::size_t V = vocab.size();
    std::vector<DocResult> results(docs.size());
    parallel_for(docs.size(), options.threads, [&](std::size_t i, std::size_t) {
        const auto& doc = docs[i];
        const auto& seq = doc.tokens;
        const auto spec = knockout.resolve(seq.size(), seq.n_eoi, weights.config.n_layers);
        const auto logits = transformer::forward_logits(weights, seq, spec);
        const auto row = [&](std::size_t t) { return std::span<const float>(logits).subspan(t * V, V); };
        auto& r = results[i];
        if (doc.answer_position) {
            const std::size_t a = *doc.answer_position;
            r.correct = predicted_class_token(row(a - 1), vocab) == seq.ids[a];
        }
        if (doc.layout == tasks::Layout::ImageFirstCaption) {
            // Under teacher forcing, every caption token being the argmax is
            // exactly the condition for greedy decoding to reproduce the caption.
            bool match = true;
            for (std::size_t t = seq.n_eoi + 1; t <= *doc.answer_position && match; ++t)
                match = static_cast<transformer::TokenId>(argmax(row(t - 1))) == seq.ids[t];
            r.caption_match = match;
        }
        const auto mask = tasks::loss_mask_for(seq, vocab, options.regime);
        for (std::size_t t = 1; t < seq.size(); ++t) {
            if (!mask[t]) continue;
            const auto lr = row(t - 1);
            double mx = -INFINITY;
            for (float x : lr) mx = std::max(mx, static_cast<double>(x));
            double z = 0.0;
            for (float x : lr) z += std::exp(static_cast<double>(x) - mx);
            r.loss_sum += mx + std::log(z) - static_cast<double>(lr[static_cast<std::size_t>(seq.ids[t])]);
            ++r.targets;
        }
    });

    EvalMetrics m;
    std::size_t correct = 0, matched = 0;
    double loss_sum = 0.0;
    for (const auto& r : results) {
        if (r.correct >= 0) {
            ++m.n_classified;
            correct += static_cast<std::size_t>(r.correct);
        }
        if (r.caption_match >= 0) {
            ++m.n_captions;
            matched += static_cast<std::size_t>(r.caption_match);
        }
        loss_sum += r.loss_sum;
        m.n_targets += r.targets;
    }
    m.accuracy = m.n_classified ? static_cast<double>(correct) / static_cast<double>(m.n_classified) : 0.0;
    m.caption_exact_match = m.n_captions ? static_cast<double>(matched) / static_cast<double>(m.n_captions) : 0.0;
    m.loss = m.n_targets ? loss_sum / static_cast<double>(m.n_targets) : 0.0;
    return m;
}

}  // namespace gatescope::training
