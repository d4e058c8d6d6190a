#include "gatescope/geometry/intrinsic_dimension.hpp"

#include <cmath>
#include <vector>

#include "gatescope/common/error.hpp"

namespace gatescope::geometry {

namespace {

double twonn(const NeighborGraph& graph) {
    double sum_log = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const double r1 = graph.radius(i, 1);
        const double r2 = graph.radius(i, 2);
        if (r1 <= 0.0) continue;
        sum_log += std::log(r2 / r1);
        ++m;
    }
    if (m == 0 || sum_log <= 0.0) {
        throw NumericalError("TwoNN undefined: all distance ratios equal 1 or are zero-distance");
    }
    return static_cast<double>(m) / sum_log;
}

double gride(const NeighborGraph& graph, std::size_t k) {
    const double n1 = static_cast<double>(k);
    const double n2 = static_cast<double>(2 * k);
    std::vector<double> log_mu;
    log_mu.reserve(graph.size());
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const double rk = graph.radius(i, k);
        const double r2k = graph.radius(i, 2 * k);
        if (rk <= 0.0) continue;
        const double lm = std::log(r2k / rk);
        // mu = 1 has zero likelihood for k > 1; the continuous model never produces it.
        if (lm <= 0.0 && k > 1) continue;
        log_mu.push_back(lm);
    }
    double sum_log = 0.0;
    for (double lm : log_mu) sum_log += lm;
    if (log_mu.empty() || sum_log <= 0.0) {
        throw NumericalError("Gride undefined: all distance ratios equal 1 or are zero-distance");
    }
    const double m = static_cast<double>(log_mu.size());

    // Derivative of the log-likelihood; strictly decreasing in d.
    const auto score = [&](double d) {
        double s = m / d - (n2 - 1.0) * sum_log;
        if (n2 - n1 - 1.0 > 0.0) {
            double acc = 0.0;
            for (double lm : log_mu) {
                acc += lm > 0.0 ? lm / -std::expm1(-d * lm) : 1.0 / d;
            }
            s += (n2 - n1 - 1.0) * acc;
        }
        return s;
    };

    double lo = 1e-9;
    double hi = kMaxIntrinsicDimension;
    if (score(hi) >= 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (score(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double estimate_intrinsic_dimension(const NeighborGraph& graph, IdEstimator estimator) {
    switch (estimator.method) {
        case IdMethod::TwoNN:
            require(graph.k_max() >= 2, "TwoNN needs k_max >= 2");
            return twonn(graph);
        case IdMethod::Gride:
            require(estimator.k >= 1, "Gride needs k >= 1");
            require(graph.k_max() >= 2 * estimator.k, "Gride(k) needs k_max >= 2k");
            return gride(graph, estimator.k);
    }
    throw ConfigError("unknown intrinsic-dimension method");
}

}  // namespace gatescope::geometry
