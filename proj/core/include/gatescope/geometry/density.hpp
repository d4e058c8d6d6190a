#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gatescope/geometry/knn.hpp"

namespace gatescope::geometry {

/// kNN log-density; points whose k-th neighbor sits at distance zero carry
/// log_rho = +inf and are excluded by downstream consumers.
struct DensityEstimate {
    std::vector<double> log_rho;
    std::vector<double> err_log_rho;
    double id_used = 0.0;
    std::size_t k_used = 0;

    std::size_t size() const { return log_rho.size(); }
    bool finite(std::size_t i) const { return std::isfinite(log_rho[i]); }
    std::size_t infinite_count() const;
};

/// ln of the volume of the unit ball in (real) dimension d.
double log_unit_ball_volume(double d);

/// log rho_i = ln k - ln n - ln omega_d - d ln r_{i,k}; err = 1/sqrt(k).
DensityEstimate estimate_knn_density(const NeighborGraph& graph, std::size_t k, double intrinsic_dimension);

}  // namespace gatescope::geometry
