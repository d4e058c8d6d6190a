#include "gatescope/geometry/density.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "gatescope/common/error.hpp"

namespace gatescope::geometry {

std::size_t DensityEstimate::infinite_count() const {
    std::size_t c = 0;
    for (double v : log_rho) c += std::isfinite(v) ? 0 : 1;
    return c;
}

double log_unit_ball_volume(double d) {
    return 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0);
}

DensityEstimate estimate_knn_density(const NeighborGraph& graph, std::size_t k, double intrinsic_dimension) {
    require(k >= 1 && k <= graph.k_max(), "density k must satisfy 1 <= k <= k_max");
    require(intrinsic_dimension > 0.0 && std::isfinite(intrinsic_dimension), "intrinsic dimension must be positive");
    const std::size_t n = graph.size();
    DensityEstimate est;
    est.id_used = intrinsic_dimension;
    est.k_used = k;
    est.log_rho.resize(n);
    est.err_log_rho.assign(n, 1.0 / std::sqrt(static_cast<double>(k)));
    const double base = std::log(static_cast<double>(k)) - std::log(static_cast<double>(n)) -
                        log_unit_ball_volume(intrinsic_dimension);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = graph.radius(i, k);
        est.log_rho[i] = r > 0.0 ? base - intrinsic_dimension * std::log(r)
                                 : std::numeric_limits<double>::infinity();
    }
    return est;
}

}  // namespace gatescope::geometry
