#include <map>
#include <numeric>

#include "common.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/parallel.hpp"
#include "gatescope/geometry/metrics.hpp"
#include "gatescope/transformer/forward.hpp"

namespace gatescope::experiments {

using nlohmann::json;

void to_json(json& j, const ProbeConfig& c) {
    j = json{{"layers", c.layers}, {"k", c.k}, {"seed", c.seed}, {"reference_rows", c.reference ? c.reference->size() : 0}};
}

void from_json(const json& j, ProbeConfig& c) {
    io::require_known_keys(j, {"layers", "k", "seed", "reference_rows"}, "probe config");
    const ProbeConfig d;
    c.layers = j.value("layers", d.layers);
    c.k = j.value("k", d.k);
    c.seed = j.value("seed", d.seed);
}

ExperimentOutput semantic_probe_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                           const ProbeConfig& config) {
    const auto& mc = subject.weights.config;
    const auto layers = resolve_layers(config.layers, mc.n_layers);
    std::vector<transformer::TokenSequence> prompts;
    std::vector<int> labels;
    for (const auto& d : docs) {
        require(d.answer_position.has_value(), "probe documents need an answer slot");
        prompts.push_back(d.prompt());
        labels.push_back(static_cast<int>(d.class_id));
    }
    require(!prompts.empty(), "probe corpus is empty");
    const std::size_t n = prompts.size();
    require(config.k >= 1 && config.k <= n - 1, "probe k must satisfy 1 <= k <= n - 1");
    if (config.reference)
        require(config.reference->size() == n, "reference file has " + std::to_string(config.reference->size()) +
                                                    " rows but the probe corpus has " + std::to_string(n) + " documents");
    const std::size_t n_eoi = prompts.front().n_eoi;
    const std::size_t len = prompts.front().size();
    for (const auto& p : prompts)
        require(p.n_eoi == n_eoi && p.size() == len, "probe prompts must share one layout");
    require(n_eoi >= 3, "probe needs at least two image tokens");

    // Captured positions: internal image 2..n_eoi-2, last image, [EOI], answer predictor.
    std::vector<std::size_t> positions;
    for (std::size_t p = 2; p + 1 < n_eoi; ++p) positions.push_back(p);
    const std::size_t internal_count = positions.size();
    positions.push_back(n_eoi - 1);
    positions.push_back(n_eoi);
    if (len - 1 != n_eoi) positions.push_back(len - 1);
    const std::size_t D = mc.d_model;
    const std::size_t P = positions.size();
    // states[(li * P + pi)] is an n × D row-major block.
    std::vector<std::vector<double>> states(layers.size() * P, std::vector<double>(n * D));
    parallel_for(n, subject.threads, [&](std::size_t i, std::size_t) {
        const auto trace = transformer::forward(subject.weights, prompts[i], detail::residual_only());
        for (std::size_t li = 0; li < layers.size(); ++li)
            for (std::size_t pi = 0; pi < P; ++pi) {
                const auto v = trace.residual(layers[li], positions[pi]);
                std::copy(v.begin(), v.end(), states[li * P + pi].begin() + static_cast<std::ptrdiff_t>(i * D));
            }
    });

    const auto label_ref = geometry::GroundTruthRef::from_labels(labels);
    std::optional<geometry::GroundTruthRef> point_ref;
    if (config.reference) point_ref = geometry::GroundTruthRef::from_points(*config.reference);

    ExperimentOutput out;
    out.config_hash = detail::config_hash(json(config), detail::corpus_fingerprint(docs));
    RecordSink sink("semantic_probe", subject.checkpoint, out.config_hash, config.seed, mc.n_layers);

    std::vector<std::pair<std::string, std::vector<std::size_t>>> groups = {
        {"internal_image", {}}, {"last_image", {internal_count}}, {"eoi", {internal_count + 1}}};
    for (std::size_t pi = 0; pi < internal_count; ++pi) groups[0].second.push_back(pi);
    if (P > internal_count + 2) groups.push_back({"answer_slot", {internal_count + 2}});

    std::vector<double> chi_labels(layers.size() * P), chi_ref(layers.size() * P);
    parallel_for(layers.size() * P, subject.threads, [&](std::size_t b, std::size_t) {
        const geometry::PointSet pts(n, D, states[b]);
        const auto graph = geometry::build_knn_graph(pts, config.k);
        chi_labels[b] = geometry::neighborhood_overlap(graph, label_ref, config.k).chi;
        if (point_ref) chi_ref[b] = geometry::neighborhood_overlap(graph, *point_ref, config.k).chi;
    });

    for (std::size_t li = 0; li < layers.size(); ++li) {
        for (const auto& [name, members] : groups) {
            double sum_l = 0.0, sum_r = 0.0;
            for (auto pi : members) {
                sum_l += chi_labels[li * P + pi];
                sum_r += chi_ref[li * P + pi];
            }
            const double m = static_cast<double>(members.size());
            auto& r = sink.add_layer(layers[li], "overlap_labels", sum_l / m);
            r.group = name;
            if (point_ref) sink.add_layer(layers[li], "overlap_reference", sum_r / m).group = name;
        }
    }
    // Expected overlap for neighbors drawn uniformly at random.
    std::map<int, std::size_t> class_size;
    for (int c : labels) ++class_size[c];
    double chance = 0.0;
    for (int c : labels) chance += static_cast<double>(class_size[c] - 1) / static_cast<double>(n - 1);
    sink.add("chance_level", chance / static_cast<double>(n)).group = "labels";
    out.records = sink.take();
    return out;
}

}  // namespace gatescope::experiments
