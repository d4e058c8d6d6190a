#include <algorithm>
#include <map>

#include "common.hpp"
#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/parallel.hpp"
#include "gatescope/common/rng.hpp"
#include "gatescope/geometry/adp.hpp"
#include "gatescope/geometry/intrinsic_dimension.hpp"
#include "gatescope/geometry/metrics.hpp"
#include "gatescope/transformer/forward.hpp"

namespace gatescope::experiments {

using nlohmann::json;

std::vector<std::size_t> resolve_layers(const std::vector<std::size_t>& layers, std::size_t n_layers) {
    std::vector<std::size_t> out = layers;
    if (out.empty())
        for (std::size_t l = 0; l <= n_layers; ++l) out.push_back(l);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    for (auto l : out) require(l <= n_layers, "layer " + std::to_string(l) + " exceeds the model depth");
    return out;
}

void to_json(json& j, const ModalityGapConfig& c) {
    j = json{{"layers", c.layers}, {"n_pairs", c.n_pairs}, {"max_points", c.max_points}, {"k_density", c.k_density},
             {"z", c.z},           {"min_size", c.min_size}, {"seed", c.seed}};
}

void from_json(const json& j, ModalityGapConfig& c) {
    io::require_known_keys(j, {"layers", "n_pairs", "max_points", "k_density", "z", "min_size", "seed"},
                           "modality-gap config");
    const ModalityGapConfig d;
    c.layers = j.value("layers", d.layers);
    c.n_pairs = j.value("n_pairs", d.n_pairs);
    c.max_points = j.value("max_points", d.max_points);
    c.k_density = j.value("k_density", d.k_density);
    c.z = j.value("z", d.z);
    c.min_size = j.value("min_size", d.min_size);
    c.seed = j.value("seed", d.seed);
}

namespace {

struct Slot {
    std::size_t doc;
    std::size_t position;
    bool image;
    std::size_t row;
};

/// Unique rows in first-occurrence order, with the modality of each.
geometry::PointSet deduplicate(const std::vector<double>& data, std::size_t n, std::size_t d,
                               const std::vector<std::string>& tags, std::vector<std::string>& unique_tags) {
    std::map<std::vector<double>, std::size_t> seen;
    std::vector<double> out;
    unique_tags.clear();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(data.begin() + static_cast<std::ptrdiff_t>(i * d),
                                data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
        if (!seen.emplace(row, i).second) continue;
        out.insert(out.end(), row.begin(), row.end());
        unique_tags.push_back(tags[i]);
    }
    return geometry::PointSet(unique_tags.size(), d, std::move(out));
}

}  // namespace

ExperimentOutput modality_gap_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                         const ModalityGapConfig& config) {
    const auto& mc = subject.weights.config;
    const auto layers = resolve_layers(config.layers, mc.n_layers);
    require(config.k_density >= 2, "k_density must be at least 2");
    require(config.max_points >= 1 && config.n_pairs >= 1, "max_points and n_pairs must be positive");

    std::vector<Slot> image, text;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto& seq = docs[d].tokens;
        for (std::size_t t = 0; t < seq.size(); ++t) {
            if (seq.modality[t] == transformer::Modality::Image) image.push_back({d, t, true, 0});
            if (seq.modality[t] == transformer::Modality::Text) text.push_back({d, t, false, 0});
        }
    }
    require(!image.empty() && !text.empty(), "modality gap needs both image and text tokens in the corpus");
    Rng rng(derive_seed(config.seed, 0x3a9));
    for (auto* slots : {&image, &text}) {
        std::shuffle(slots->begin(), slots->end(), rng);
        if (slots->size() > config.max_points) slots->resize(config.max_points);
        std::sort(slots->begin(), slots->end(), [](const Slot& a, const Slot& b) {
            return std::tie(a.doc, a.position) < std::tie(b.doc, b.position);
        });
        for (std::size_t r = 0; r < slots->size(); ++r) (*slots)[r].row = r;
    }
    const std::size_t n_img = image.size(), n_txt = text.size(), D = mc.d_model;
    if (n_img + n_txt <= config.k_density)
        throw ConfigError("modality gap: " + std::to_string(n_img + n_txt) + " points is not more than k_density");

    std::vector<std::vector<Slot>> by_doc(docs.size());
    for (const auto* slots : {&image, &text})
        for (const auto& s : *slots) by_doc[s.doc].push_back(s);
    // states[l]: image rows then text rows.
    std::vector<std::vector<double>> states(layers.size(), std::vector<double>((n_img + n_txt) * D));
    parallel_for(docs.size(), subject.threads, [&](std::size_t d, std::size_t) {
        if (by_doc[d].empty()) return;
        const auto trace = transformer::forward(subject.weights, docs[d].tokens, detail::residual_only());
        for (std::size_t li = 0; li < layers.size(); ++li)
            for (const auto& s : by_doc[d]) {
                const auto v = trace.residual(layers[li], s.position);
                std::copy(v.begin(), v.end(), states[li].begin() + static_cast<std::ptrdiff_t>(((s.image ? 0 : n_img) + s.row) * D));
            }
    });

    ExperimentOutput out;
    out.config_hash = detail::config_hash(json(config), detail::corpus_fingerprint(docs));
    RecordSink sink("modality_gap", subject.checkpoint, out.config_hash, config.seed, mc.n_layers);
    std::vector<std::string> tags(n_img, "image");
    tags.insert(tags.end(), n_txt, "text");
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const std::size_t l = layers[li];
        const auto& s = states[li];
        geometry::PointSet img(n_img, D, std::vector<double>(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n_img * D)));
        geometry::PointSet txt(n_txt, D, std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(n_img * D), s.end()));
        const auto gap = geometry::cosine_gap(img, txt, config.n_pairs, derive_seed(config.seed, 0xc05, l));
        auto& r = sink.add_layer(l, "cosine_similarity", gap.median);
        r.group = "image_text";
        r.ci_low = gap.q25;
        r.ci_high = gap.q75;

        std::vector<std::string> unique_tags;
        const auto pooled = deduplicate(s, n_img + n_txt, D, tags, unique_tags);
        if (pooled.size() <= config.k_density)
            throw ConfigError("modality gap: layer " + std::to_string(l) + " has only " +
                              std::to_string(pooled.size()) + " distinct states, not more than k_density");
        const auto graph = geometry::build_knn_graph(pooled, config.k_density);
        const double id = geometry::estimate_intrinsic_dimension(graph, geometry::IdEstimator::twonn());
        const auto density = geometry::estimate_knn_density(graph, config.k_density, id);
        const auto clusters = geometry::adp_cluster(pooled, graph, density, {config.z, config.min_size});
        const double h = geometry::homogeneity(clusters.labels, unique_tags);
        sink.add_layer(l, "homogeneity", h).group = "pooled";
        sink.add_layer(l, "n_clusters", static_cast<double>(clusters.n_clusters())).group = "pooled";
        sink.add_layer(l, "intrinsic_dimension", id).group = "pooled";
        sink.add_layer(l, "n_points", static_cast<double>(pooled.size())).group = "pooled";
    }
    out.records = sink.take();
    return out;
}

}  // namespace gatescope::experiments
