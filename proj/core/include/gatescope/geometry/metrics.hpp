#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gatescope/geometry/knn.hpp"
#include "gatescope/geometry/point_set.hpp"

namespace gatescope::geometry {

/// h = 1 - H(truth | pred) / H(truth), natural-log entropies; 1 when H(truth) = 0.
double homogeneity(std::span<const int> pred, std::span<const int> truth);
double homogeneity(std::span<const int> pred, std::span<const std::string> truth);

/// Reference neighborhoods for the neighborhood overlap: either a second
/// embedding of the same n items, or class labels where every same-class
/// point counts as a neighbor.
class GroundTruthRef {
public:
    enum class Kind { Labels, Points };

    static GroundTruthRef from_labels(std::vector<int> labels);
    static GroundTruthRef from_labels(std::span<const std::string> labels);
    static GroundTruthRef from_points(PointSet points);

    Kind kind() const { return kind_; }
    std::size_t size() const;
    const std::vector<int>& labels() const { return labels_; }
    const PointSet& points() const { return points_; }

private:
    Kind kind_ = Kind::Labels;
    std::vector<int> labels_;
    PointSet points_;
};

struct OverlapResult {
    double chi = 0.0;
    /// Points whose label class has no other member; each contributed 0.
    std::size_t isolated_points = 0;
};

inline constexpr std::size_t kDefaultOverlapK = 30;

/// chi = (1/(n k)) sum_i |N_k(i) ∩ N_k^gt(i)|.
OverlapResult neighborhood_overlap(const PointSet& points, const GroundTruthRef& reference,
                                   std::size_t k = kDefaultOverlapK);
/// Same, reusing a graph already built on the probed points (k_max >= k).
OverlapResult neighborhood_overlap(const NeighborGraph& graph, const GroundTruthRef& reference,
                                   std::size_t k = kDefaultOverlapK);

struct CosineSummary {
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    std::size_t resampled = 0;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Quantiles of cos(a_i, b_j) over n_pairs index pairs drawn uniformly with
/// replacement from the seeded generator; pairs touching a zero vector are redrawn.
CosineSummary cosine_gap(const PointSet& set_a, const PointSet& set_b, std::size_t n_pairs,
                         std::uint64_t seed);

/// Quantiles over an explicit pair list (zero-norm pairs skipped).
CosineSummary cosine_gap(const PointSet& set_a, const PointSet& set_b, std::span<const IndexPair> pairs);

/// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace gatescope::geometry
