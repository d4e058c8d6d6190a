#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gatescope/geometry/density.hpp"
#include "gatescope/geometry/knn.hpp"
#include "gatescope/geometry/point_set.hpp"

namespace gatescope::geometry {

struct AdpOptions {
    /// Confidence level of the peak-vs-saddle test.
    double z = 1.65;
    /// Clusters smaller than this are dissolved into the cluster with the nearest peak.
    std::size_t min_size = 20;
};

struct MergeEvent {
    /// Clusters are named by their index in the initial peak list
    /// (peaks ordered by decreasing density).
    std::size_t survivor = 0;
    std::size_t absorbed = 0;
    /// min over both peaks of (log rho_peak - log rho_saddle) / sqrt(err_peak^2 + err_saddle^2);
    /// NaN for size-based dissolution.
    double statistic = 0.0;
    bool size_dissolution = false;
};

struct ClusterAssignment {
    std::vector<int> labels;
    /// Point index of each cluster's peak; peaks[c] is the densest point of cluster c.
    std::vector<std::size_t> peaks;
    std::vector<MergeEvent> merge_log;
    std::vector<bool> halo;
    /// True when several peaks were found but no border points exist between any of them.
    bool saddles_undefined = false;

    std::size_t n_clusters() const { return peaks.size(); }
    std::optional<double> saddle_log_rho(std::size_t a, std::size_t b) const;
    std::optional<double> saddle_err(std::size_t a, std::size_t b) const;
    std::vector<std::size_t> cluster_sizes() const;

    /// n_clusters × n_clusters, row-major; NaN marks absent pairs and the diagonal.
    std::vector<double> saddle_matrix;
    std::vector<double> saddle_err_matrix;
};

/// Advanced density-peaks clustering.
///
/// 1. Peaks: i is a peak iff no j in N_k(i) is denser and i lies in the
///    k-neighborhood of no denser point (density ties broken by lower index).
/// 2. Points, visited by decreasing density, inherit the label of their
///    nearest denser neighbor; when the ordered list has none, the nearest
///    denser point over the whole set is used.
/// 3. i in a is a border point toward b when the nearest neighbor j of i
///    outside a lies in b and i is in N_k(j); the saddle of (a, b) is the
///    densest border point of the pair.
/// 4. While some pair with a saddle fails the test for either peak, the
///    worst-failing pair is merged and saddles are recomputed.
/// 5. Clusters smaller than min_size are dissolved into the cluster with the
///    nearest peak, then step 4 is repeated.
///
/// k is density.k_used; the graph must be built on `points` with k_max >= k.
ClusterAssignment adp_cluster(const PointSet& points, const NeighborGraph& graph,
                              const DensityEstimate& density, AdpOptions options = {});

}  // namespace gatescope::geometry
