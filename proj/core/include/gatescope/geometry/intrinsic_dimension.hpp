#pragma once

#include <cstddef>

#include "gatescope/geometry/knn.hpp"

namespace gatescope::geometry {

enum class IdMethod { TwoNN, Gride };

struct IdEstimator {
    IdMethod method = IdMethod::TwoNN;
    /// Gride uses the ratio r_{2k} / r_k.
    std::size_t k = 16;

    static IdEstimator twonn() { return {IdMethod::TwoNN, 1}; }
    static IdEstimator gride(std::size_t k = 16) { return {IdMethod::Gride, k}; }
};

/// Upper end of the bracket searched by the Gride maximum-likelihood solver.
inline constexpr double kMaxIntrinsicDimension = 200.0;

/// Maximum-likelihood intrinsic dimension from nearest-neighbor distance ratios.
///
/// TwoNN: d = m / sum_i ln(r_{i,2} / r_{i,1}) over the m points with r_{i,1} > 0.
///
/// Gride(k): mu_i = r_{i,2k} / r_{i,k} follows
///   f(mu) = d (mu^d - 1)^{k-1} / (B(k, k) mu^{d(2k-1)+1}),
/// whose log-likelihood is concave in d. The score equation is solved by
/// bisection on (0, 200]. Gride(1) coincides with TwoNN.
///
/// Throws ConfigError if k_max is too small and NumericalError on degenerate data.
double estimate_intrinsic_dimension(const NeighborGraph& graph, IdEstimator estimator = {});

}  // namespace gatescope::geometry
