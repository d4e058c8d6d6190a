#include "gatescope/training/loss.hpp"

#include <algorithm>
#include <cmath>

#include "gatescope/common/error.hpp"

namespace gatescope::training {

double masked_cross_entropy(std::span<const double> logits, std::size_t vocab, std::span<const TokenId> targets,
                            std::span<const unsigned char> mask) {
    require(vocab >= 1 && logits.size() == targets.size() * vocab, "logits and targets are not aligned");
    require(mask.size() == targets.size(), "loss mask and targets are not aligned");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (!mask[r]) continue;
        require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < vocab, "target id outside the vocabulary");
        const auto row = logits.subspan(r * vocab, vocab);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double x : row) z += std::exp(x - mx);
        total += mx + std::log(z) - row[static_cast<std::size_t>(targets[r])];
        ++count;
    }
    require(count > 0, "loss over a fully masked batch is undefined");
    return total / static_cast<double>(count);
}

Example make_example(const tasks::Document& doc, const tasks::Vocabulary& vocab, tasks::LossRegime regime,
                     bool eoi_mask, std::size_t n_layers) {
    Example ex{doc.tokens, tasks::loss_mask_for(doc.tokens, vocab, regime), {}};
    if (eoi_mask)
        ex.knockout = transformer::KnockoutRule::text_to_eoi().resolve(doc.tokens.size(), doc.tokens.n_eoi, n_layers);
    return ex;
}

std::size_t target_count(std::span<const Example> batch) {
    std::size_t n = 0;
    for (const auto& ex : batch)
        for (std::size_t t = 1; t < ex.loss_mask.size(); ++t) n += ex.loss_mask[t] != 0;
    return n;
}

}  // namespace gatescope::training
