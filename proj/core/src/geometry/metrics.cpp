#include "gatescope/geometry/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "gatescope/common/error.hpp"
#include "gatescope/common/rng.hpp"

namespace gatescope::geometry {

namespace {

double entropy_of_counts(const std::map<int, std::size_t>& counts, double n) {
    double h = 0.0;
    for (const auto& [_, c] : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

std::vector<int> encode(std::span<const std::string> labels) {
    std::unordered_map<std::string, int> codes;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, _] = codes.emplace(l, static_cast<int>(codes.size()));
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

double homogeneity(std::span<const int> pred, std::span<const int> truth) {
    require(pred.size() == truth.size(), "homogeneity: label vectors differ in length");
    require(!pred.empty(), "homogeneity: empty input");
    const double n = static_cast<double>(pred.size());
    std::map<int, std::size_t> truth_counts;
    std::map<int, std::size_t> pred_counts;
    std::map<std::pair<int, int>, std::size_t> joint;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++truth_counts[truth[i]];
        ++pred_counts[pred[i]];
        ++joint[{pred[i], truth[i]}];
    }
    const double h_truth = entropy_of_counts(truth_counts, n);
    if (h_truth == 0.0) return 1.0;
    double h_cond = 0.0;
    for (const auto& [key, c] : joint) {
        const double nk = static_cast<double>(pred_counts.at(key.first));
        h_cond -= (static_cast<double>(c) / n) * std::log(static_cast<double>(c) / nk);
    }
    return std::clamp(1.0 - h_cond / h_truth, 0.0, 1.0);
}

double homogeneity(std::span<const int> pred, std::span<const std::string> truth) {
    const auto codes = encode(truth);
    return homogeneity(pred, codes);
}

GroundTruthRef GroundTruthRef::from_labels(std::vector<int> labels) {
    require(!labels.empty(), "ground truth labels are empty");
    GroundTruthRef ref;
    ref.kind_ = Kind::Labels;
    ref.labels_ = std::move(labels);
    return ref;
}

GroundTruthRef GroundTruthRef::from_labels(std::span<const std::string> labels) {
    return from_labels(encode(labels));
}

GroundTruthRef GroundTruthRef::from_points(PointSet points) {
    GroundTruthRef ref;
    ref.kind_ = Kind::Points;
    ref.points_ = std::move(points);
    return ref;
}

std::size_t GroundTruthRef::size() const {
    return kind_ == Kind::Labels ? labels_.size() : points_.size();
}

OverlapResult neighborhood_overlap(const PointSet& points, const GroundTruthRef& reference, std::size_t k) {
    require(k >= 1 && k + 1 <= points.size(), "neighborhood overlap needs 1 <= k <= n-1");
    return neighborhood_overlap(build_knn_graph(points, k), reference, k);
}

OverlapResult neighborhood_overlap(const NeighborGraph& graph, const GroundTruthRef& reference, std::size_t k) {
    const std::size_t n = graph.size();
    require(reference.size() == n, "ground truth size does not match the probed point set");
    require(k >= 1 && k <= graph.k_max(), "neighborhood overlap k exceeds the graph's k_max");
    OverlapResult result;
    std::size_t shared = 0;
    if (reference.kind() == GroundTruthRef::Kind::Labels) {
        const auto& labels = reference.labels();
        std::unordered_map<int, std::size_t> class_size;
        for (int l : labels) ++class_size[l];
        for (std::size_t i = 0; i < n; ++i) {
            if (class_size[labels[i]] <= 1) {
                ++result.isolated_points;
                continue;
            }
            std::size_t same = 0;
            for (const auto& nb : graph.neighbors(i, k)) same += labels[nb.index] == labels[i] ? 1 : 0;
            shared += std::min(same, k);
        }
    } else {
        const auto ref_graph = build_knn_graph(reference.points(), k);
        std::vector<std::uint32_t> a(k);
        std::vector<std::uint32_t> b(k);
        for (std::size_t i = 0; i < n; ++i) {
            std::ranges::transform(graph.neighbors(i, k), a.begin(), &Neighbor::index);
            std::ranges::transform(ref_graph.neighbors(i, k), b.begin(), &Neighbor::index);
            std::ranges::sort(a);
            std::ranges::sort(b);
            std::vector<std::uint32_t> common;
            std::ranges::set_intersection(a, b, std::back_inserter(common));
            shared += common.size();
        }
    }
    result.chi = static_cast<double>(shared) / (static_cast<double>(n) * static_cast<double>(k));
    return result;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double quantile(std::vector<double> values, double q) {
    require(!values.empty(), "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

CosineSummary summarize(std::vector<double> cosines, std::size_t resampled) {
    require(!cosines.empty(), "cosine gap: no valid pairs");
    CosineSummary s;
    s.median = quantile(cosines, 0.5);
    s.q25 = quantile(cosines, 0.25);
    s.q75 = quantile(std::move(cosines), 0.75);
    s.resampled = resampled;
    return s;
}

}  // namespace

CosineSummary cosine_gap(const PointSet& set_a, const PointSet& set_b, std::size_t n_pairs, std::uint64_t seed) {
    require(!set_a.empty() && !set_b.empty(), "cosine gap needs two nonempty sets");
    require(set_a.dim() == set_b.dim(), "cosine gap sets differ in dimension");
    require(n_pairs >= 1, "cosine gap needs n_pairs >= 1");
    Rng rng(seed);
    std::vector<double> cosines;
    cosines.reserve(n_pairs);
    std::size_t failures = 0;
    while (cosines.size() < n_pairs) {
        const std::size_t ia = uniform_index(rng, set_a.size());
        const std::size_t ib = uniform_index(rng, set_b.size());
        const double c = cosine_similarity(set_a.row(ia), set_b.row(ib));
        if (std::isnan(c)) {
            if (++failures > 100 * n_pairs) throw NumericalError("cosine gap: too many zero-norm vectors");
            continue;
        }
        cosines.push_back(c);
    }
    return summarize(std::move(cosines), failures);
}

CosineSummary cosine_gap(const PointSet& set_a, const PointSet& set_b, std::span<const IndexPair> pairs) {
    require(set_a.dim() == set_b.dim(), "cosine gap sets differ in dimension");
    std::vector<double> cosines;
    cosines.reserve(pairs.size());
    std::size_t skipped = 0;
    for (const auto& [ia, ib] : pairs) {
        require(ia < set_a.size() && ib < set_b.size(), "cosine gap pair out of range");
        const double c = cosine_similarity(set_a.row(ia), set_b.row(ib));
        if (std::isnan(c)) {
            ++skipped;
            continue;
        }
        cosines.push_back(c);
    }
    return summarize(std::move(cosines), skipped);
}

}  // namespace gatescope::geometry
