#include <numeric>

#include "common.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/parallel.hpp"
#include "gatescope/transformer/forward.hpp"

namespace gatescope::experiments {

using nlohmann::json;

void to_json(json& j, const AttentionProfileConfig& c) { j = json{{"threshold", c.threshold}}; }

void from_json(const json& j, AttentionProfileConfig& c) {
    io::require_known_keys(j, {"threshold"}, "attention-profile config");
    c.threshold = j.value("threshold", AttentionProfileConfig{}.threshold);
}

ProfileSummary summarize_attention_profiles(const std::vector<transformer::AttentionProfile>& profiles,
                                            double threshold) {
    require(!profiles.empty(), "no attention profiles to summarize");
    const std::size_t n_eoi = profiles.front().n_eoi;
    const std::size_t L = profiles.front().share.size();
    std::vector<std::vector<double>> mean(L, std::vector<double>(n_eoi + 1, 0.0));
    std::vector<std::size_t> count(L, 0);
    for (const auto& p : profiles) {
        require(p.n_eoi == n_eoi && p.share.size() == L, "attention profiles disagree on [EOI] position or depth");
        for (std::size_t l = 0; l < L; ++l) {
            if (!p.defined[l]) continue;
            ++count[l];
            for (std::size_t j = 0; j <= n_eoi; ++j) mean[l][j] += p.share[l][j];
        }
    }
    ProfileSummary s;
    s.n_eoi = n_eoi;
    s.defined.resize(L);
    std::size_t n_defined = 0;
    std::vector<double> over_layers(n_eoi + 1, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        s.defined[l] = count[l] > 0;
        if (!s.defined[l]) continue;
        ++n_defined;
        for (auto& v : mean[l]) v /= static_cast<double>(count[l]);
        for (std::size_t j = 0; j <= n_eoi; ++j) over_layers[j] += mean[l][j];
    }
    for (std::size_t j = 0; j < n_eoi; ++j)
        if (n_defined > 0 && over_layers[j] / static_cast<double>(n_defined) > threshold) s.individual.push_back(j);
    s.individual.push_back(n_eoi);

    s.share.assign(L, std::vector<double>(s.individual.size() + 1, 0.0));
    for (std::size_t l = 0; l < L; ++l) {
        if (!s.defined[l]) continue;
        std::vector<bool> taken(n_eoi + 1, false);
        for (std::size_t g = 0; g < s.individual.size(); ++g) {
            s.share[l][g] = mean[l][s.individual[g]];
            taken[s.individual[g]] = true;
        }
        for (std::size_t j = 0; j <= n_eoi; ++j)
            if (!taken[j]) s.share[l].back() += mean[l][j];
    }
    return s;
}

namespace {

std::string position_name(std::size_t j, std::size_t n_eoi) {
    if (j == n_eoi) return "eoi";
    if (j == 0) return "bos";
    if (j == 1) return "boi";
    if (j + 1 == n_eoi) return "last_image";
    return "image_" + std::to_string(j);
}

}  // namespace

ExperimentOutput attention_profile_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                              const AttentionProfileConfig& config) {
    require(config.threshold >= 0.0, "attention threshold must be non-negative");
    std::vector<const tasks::Document*> prompts;
    for (const auto& d : docs)
        if (d.layout == tasks::Layout::ClassificationPrompt) prompts.push_back(&d);
    require(!prompts.empty(), "attention profile needs classification prompts");

    std::vector<transformer::AttentionProfile> profiles(prompts.size());
    parallel_for(prompts.size(), subject.threads, [&](std::size_t i, std::size_t) {
        const auto prompt = prompts[i]->prompt();
        transformer::Interventions iv;
        iv.capture = {false, true};
        const auto trace = transformer::forward(subject.weights, prompt, iv);
        profiles[i] = transformer::cross_modal_attention_profile(trace, prompt.n_eoi);
    });
    const auto summary = summarize_attention_profiles(profiles, config.threshold);

    ExperimentOutput out;
    out.config_hash = detail::config_hash(json(config), detail::corpus_fingerprint(docs));
    const auto& mc = subject.weights.config;
    RecordSink sink("attention_profile", subject.checkpoint, out.config_hash, 0, mc.n_layers);
    for (std::size_t l = 0; l < summary.share.size(); ++l) {
        if (!summary.defined[l]) continue;
        for (std::size_t g = 0; g <= summary.individual.size(); ++g) {
            const bool internal = g == summary.individual.size();
            auto& r = sink.add_layer(l, "attention_share", summary.share[l][g]);
            r.group = internal ? "internal_image" : position_name(summary.individual[g], summary.n_eoi);
            r.key = internal ? "" : "position=" + std::to_string(summary.individual[g]);
        }
    }
    out.records = sink.take();
    return out;
}

}  // namespace gatescope::experiments
