#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gatescope/tasks/documents.hpp"
#include "gatescope/transformer/interventions.hpp"
#include "gatescope/transformer/tokens.hpp"

namespace gatescope::training {

using transformer::TokenId;

/// Mean natural-log cross-entropy over the rows whose mask is set.
/// `logits` is rows × vocab, row-major. Throws ConfigError when every row is masked.
double masked_cross_entropy(std::span<const double> logits, std::size_t vocab, std::span<const TokenId> targets,
                            std::span<const unsigned char> mask);

/// One training sequence: loss_mask[t] marks token t as a target predicted from
/// position t - 1; the knockout is applied during the forward pass.
struct Example {
    transformer::TokenSequence tokens;
    std::vector<unsigned char> loss_mask;
    transformer::KnockoutSpec knockout;
};

/// Loss mask from the regime; with eoi_mask, text queries cannot attend to [EOI] in any layer.
Example make_example(const tasks::Document& doc, const tasks::Vocabulary& vocab, tasks::LossRegime regime,
                     bool eoi_mask, std::size_t n_layers);

std::size_t target_count(std::span<const Example> batch);

}  // namespace gatescope::training
