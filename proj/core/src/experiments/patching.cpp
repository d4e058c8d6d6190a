#include <map>

#include "common.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/parallel.hpp"
#include "gatescope/transformer/forward.hpp"

namespace gatescope::experiments {

using nlohmann::json;

void to_json(json& j, const PatchingConfig& c) { j = json{{"layers", c.layers}}; }

void from_json(const json& j, PatchingConfig& c) {
    io::require_known_keys(j, {"layers"}, "patching config");
    c.layers = j.value("layers", PatchingConfig{}.layers);
}

namespace {

struct PairRun {
    // Per layer index: summed similarity and steering hits.
    std::vector<double> similarity;
    std::vector<std::size_t> steered;
    double unpatched_similarity = 0.0;
    std::size_t unpatched_steered = 0;
};

}  // namespace

ExperimentOutput patching_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                     const tasks::Vocabulary& vocab, const std::vector<tasks::ClassPair>& pairs,
                                     const PatchingConfig& config) {
    const auto& mc = subject.weights.config;
    const auto layers = resolve_layers(config.layers, mc.n_layers);
    require(!pairs.empty(), "patching needs at least one class pair");
    std::map<std::size_t, std::vector<const tasks::Document*>> by_class;
    for (const auto& d : docs) {
        require(d.answer_position.has_value(), "patching documents need an answer slot");
        by_class[d.class_id].push_back(&d);
    }

    ExperimentOutput out;
    struct Job {
        std::size_t pair;
        std::size_t index;
    };
    std::vector<Job> jobs;
    std::vector<std::size_t> counts(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [a, b] = pairs[p];
        const std::size_t na = by_class[a].size(), nb = by_class[b].size();
        counts[p] = std::min(na, nb);
        if (na != nb)
            out.warnings.push_back("class pair " + std::to_string(a) + "-" + std::to_string(b) +
                                   ": unequal document counts (" + std::to_string(na) + " vs " + std::to_string(nb) +
                                   "), truncated to " + std::to_string(counts[p]));
        require(counts[p] > 0, "class pair " + std::to_string(a) + "-" + std::to_string(b) + " has no documents");
        for (std::size_t i = 0; i < counts[p]; ++i) jobs.push_back({p, i});
    }

    struct JobResult {
        std::vector<double> similarity;
        std::vector<unsigned char> steered;
        double unpatched_similarity = 0.0;
        bool unpatched_steered = false;
    };
    std::vector<JobResult> results(jobs.size());
    parallel_for(jobs.size(), subject.threads, [&](std::size_t j, std::size_t) {
        const auto [a, b] = pairs[jobs[j].pair];
        const auto base = by_class[a][jobs[j].index]->prompt();
        const auto target = by_class[b][jobs[j].index]->prompt();
        const auto t_trace = transformer::forward(subject.weights, target, detail::residual_only());
        const auto p_target = transformer::output_distribution(t_trace, target.size() - 1);
        const auto name_a = static_cast<std::size_t>(vocab.class_name(a));
        const auto name_b = static_cast<std::size_t>(vocab.class_name(b));
        auto& r = results[j];

        transformer::Interventions plain;
        plain.capture = {false, false};
        const auto base_trace = transformer::forward(subject.weights, base, plain);
        const auto q0 = transformer::output_distribution(base_trace, base.size() - 1);
        r.unpatched_similarity = transformer::distribution_similarity(q0, p_target);
        r.unpatched_steered = q0[name_b] > q0[name_a];

        for (const std::size_t l : layers) {
            const auto src = t_trace.residual(l, target.n_eoi);
            transformer::Interventions iv;
            iv.capture = {false, false};
            iv.patch.entries.push_back({l, base.n_eoi, std::vector<double>(src.begin(), src.end())});
            const auto trace = transformer::forward(subject.weights, base, iv);
            const auto q = transformer::output_distribution(trace, base.size() - 1);
            r.similarity.push_back(transformer::distribution_similarity(q, p_target));
            r.steered.push_back(q[name_b] > q[name_a]);
        }
    });

    std::vector<PairRun> runs(pairs.size());
    for (auto& run : runs) {
        run.similarity.assign(layers.size(), 0.0);
        run.steered.assign(layers.size(), 0);
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        auto& run = runs[jobs[j].pair];
        for (std::size_t li = 0; li < layers.size(); ++li) {
            run.similarity[li] += results[j].similarity[li];
            run.steered[li] += results[j].steered[li];
        }
        run.unpatched_similarity += results[j].unpatched_similarity;
        run.unpatched_steered += results[j].unpatched_steered;
    }

    json cfg = config;
    json pair_list = json::array();
    for (const auto& [a, b] : pairs) pair_list.push_back({a, b});
    cfg["pairs"] = pair_list;
    out.config_hash = detail::config_hash(cfg, detail::corpus_fingerprint(docs));
    RecordSink sink("patching", subject.checkpoint, out.config_hash, 0, mc.n_layers);

    std::vector<double> all_sim(layers.size(), 0.0), all_steer(layers.size(), 0.0);
    double all_sim0 = 0.0, all_steer0 = 0.0;
    std::size_t total = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto& run = runs[p];
        const double n = static_cast<double>(counts[p]);
        const std::string key = "pair=" + std::to_string(pairs[p].first) + "-" + std::to_string(pairs[p].second);
        for (std::size_t li = 0; li < layers.size(); ++li) {
            sink.add_layer(layers[li], "similarity", run.similarity[li] / n).key = key;
            sink.add_layer(layers[li], "steering_accuracy", static_cast<double>(run.steered[li]) / n).key = key;
            all_sim[li] += run.similarity[li];
            all_steer[li] += static_cast<double>(run.steered[li]);
        }
        auto& s0 = sink.add("similarity", run.unpatched_similarity / n);
        s0.group = "unpatched";
        s0.key = key;
        auto& t0 = sink.add("steering_accuracy", static_cast<double>(run.unpatched_steered) / n);
        t0.group = "unpatched";
        t0.key = key;
        sink.add("n_documents", n).key = key;
        all_sim0 += run.unpatched_similarity;
        all_steer0 += static_cast<double>(run.unpatched_steered);
        total += counts[p];
    }
    const double nt = static_cast<double>(total);
    for (std::size_t li = 0; li < layers.size(); ++li) {
        sink.add_layer(layers[li], "similarity", all_sim[li] / nt).key = "all";
        sink.add_layer(layers[li], "steering_accuracy", all_steer[li] / nt).key = "all";
    }
    auto& s0 = sink.add("similarity", all_sim0 / nt);
    s0.group = "unpatched";
    s0.key = "all";
    auto& t0 = sink.add("steering_accuracy", all_steer0 / nt);
    t0.group = "unpatched";
    t0.key = "all";
    for (auto& r : sink.take()) {
        if (r.group.empty()) r.group = "eoi";
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace gatescope::experiments
