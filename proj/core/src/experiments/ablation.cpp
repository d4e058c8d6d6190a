#include "common.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/training/evaluate.hpp"

namespace gatescope::experiments {

using nlohmann::json;
using transformer::KnockoutRule;

void to_json(json& j, const AblationConfig& c) { j = json{{"specs", c.specs}}; }

void from_json(const json& j, AblationConfig& c) {
    io::require_known_keys(j, {"specs"}, "ablation config");
    c.specs = j.value("specs", AblationConfig{}.specs);
}

namespace {

struct TaskScore {
    const char* task;
    const char* metric;
    double (*score)(const training::EvalMetrics&);
    std::size_t (*count)(const training::EvalMetrics&);
};

constexpr TaskScore kTasks[] = {
    {"classification", "accuracy", [](const training::EvalMetrics& m) { return m.accuracy; },
     [](const training::EvalMetrics& m) { return m.n_classified; }},
    {"captioning", "exact_match", [](const training::EvalMetrics& m) { return m.caption_exact_match; },
     [](const training::EvalMetrics& m) { return m.n_captions; }},
};

training::EvalMetrics run(const Subject& s, const std::vector<tasks::Document>& docs, const tasks::Vocabulary& vocab,
                          const KnockoutRule& rule) {
    return training::evaluate(s.weights, docs, vocab, rule, {tasks::LossRegime::Native, s.threads});
}

std::vector<NarrowGate> gates_from(const training::EvalMetrics& none, const training::EvalMetrics& eoi,
                                   const training::EvalMetrics& img) {
    std::vector<NarrowGate> out;
    for (const auto& t : kTasks) {
        if (t.count(none) == 0) continue;
        out.push_back({t.task, t.score(none), t.score(none) - t.score(eoi), t.score(none) - t.score(img)});
    }
    return out;
}

}  // namespace

std::vector<NarrowGate> narrow_gate_diagnostic(const Subject& subject, const std::vector<tasks::Document>& docs,
                                               const tasks::Vocabulary& vocab) {
    return gates_from(run(subject, docs, vocab, KnockoutRule::none()),
                      run(subject, docs, vocab, KnockoutRule::text_to_eoi()),
                      run(subject, docs, vocab, KnockoutRule::text_to_image()));
}

namespace {

void add_gate_records(RecordSink& sink, const std::vector<NarrowGate>& gates) {
    for (const auto& g : gates) {
        for (auto [metric, value] : {std::pair{"baseline", g.baseline}, std::pair{"drop_text_to_eoi", g.drop_text_to_eoi},
                                     std::pair{"drop_text_to_img", g.drop_text_to_img}}) {
            auto& r = sink.add(metric, value);
            r.group = "narrow_gate";
            r.key = g.task;
        }
    }
}

}  // namespace

ExperimentOutput narrow_gate_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                        const tasks::Vocabulary& vocab) {
    ExperimentOutput out;
    out.config_hash = detail::config_hash(json{{"specs", {"none", "text-to-eoi", "text-to-img"}}},
                                          detail::corpus_fingerprint(docs));
    RecordSink sink("narrow_gate", subject.checkpoint, out.config_hash, 0, subject.weights.config.n_layers);
    add_gate_records(sink, narrow_gate_diagnostic(subject, docs, vocab));
    out.records = sink.take();
    return out;
}

ExperimentOutput ablation_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                     const tasks::Vocabulary& vocab, const AblationConfig& config) {
    require(!config.specs.empty(), "ablation needs at least one knockout spec");
    std::vector<KnockoutRule> rules;
    for (const auto& s : config.specs) rules.push_back(KnockoutRule::parse(s));

    ExperimentOutput out;
    out.config_hash = detail::config_hash(json(config), detail::corpus_fingerprint(docs));
    RecordSink sink("ablation", subject.checkpoint, out.config_hash, 0, subject.weights.config.n_layers);

    std::vector<std::pair<KnockoutRule, training::EvalMetrics>> cache;
    const auto metrics_for = [&](const KnockoutRule& rule) -> const training::EvalMetrics& {
        for (const auto& [r, m] : cache)
            if (r == rule) return m;
        cache.emplace_back(rule, run(subject, docs, vocab, rule));
        return cache.back().second;
    };

    for (const auto& rule : rules) {
        const auto m = metrics_for(rule);
        for (const auto& t : kTasks) {
            auto& r = sink.add(t.metric, t.count(m) ? t.score(m) : std::nan(""));
            r.group = rule.name();
            r.key = t.task;
        }
    }
    const auto none = metrics_for(KnockoutRule::none());
    const auto eoi = metrics_for(KnockoutRule::text_to_eoi());
    const auto img = metrics_for(KnockoutRule::text_to_image());
    add_gate_records(sink, gates_from(none, eoi, img));
    out.records = sink.take();
    return out;
}

}  // namespace gatescope::experiments
