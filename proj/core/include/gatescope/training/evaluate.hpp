#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gatescope/tasks/documents.hpp"
#include "gatescope/transformer/interventions.hpp"
#include "gatescope/transformer/model.hpp"

namespace gatescope::training {

struct EvalOptions {
    tasks::LossRegime regime = tasks::LossRegime::Native;
    std::size_t threads = 1;
};

struct EvalMetrics {
    /// Answer-slot argmax over the class-name tokens equals the true class.
    double accuracy = 0.0;
    std::size_t n_classified = 0;
    /// Image-first captions whose every caption token is the greedy prediction.
    double caption_exact_match = 0.0;
    std::size_t n_captions = 0;
    /// Mean next-token loss under the regime's mask.
    double loss = 0.0;
    std::size_t n_targets = 0;

    friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

/// The knockout rule is resolved against each document's own length and [EOI] position.
EvalMetrics evaluate(const transformer::Weights& weights, const std::vector<tasks::Document>& docs,
                     const tasks::Vocabulary& vocab, const transformer::KnockoutRule& knockout,
                     EvalOptions options = {});

/// Class-name token with the largest logit at the answer slot (lowest id on ties).
transformer::TokenId predicted_class_token(std::span<const float> logits_row, const tasks::Vocabulary& vocab);

}  // namespace gatescope::training
