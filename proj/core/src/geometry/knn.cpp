#include "gatescope/geometry/knn.hpp"

#include <algorithm>
#include <cmath>

#include "gatescope/common/error.hpp"

namespace gatescope::geometry {

NeighborGraph::NeighborGraph(std::size_t n, std::size_t k_max, std::vector<Neighbor> lists)
    : n_(n), k_max_(k_max), lists_(std::move(lists)) {
    require(lists_.size() == n_ * k_max_, "neighbor list storage does not match n*k_max");
}

bool NeighborGraph::contains(std::size_t i, std::size_t j, std::size_t k) const {
    for (const auto& nb : neighbors(i, k)) {
        if (nb.index == j) return true;
    }
    return false;
}

NeighborGraph build_knn_graph(const PointSet& points, std::size_t k_max) {
    const std::size_t n = points.size();
    if (k_max < 1 || k_max + 1 > n) {
        throw ConfigError("k_max must satisfy 1 <= k_max <= n-1 (n=" + std::to_string(n) +
                          ", k_max=" + std::to_string(k_max) + ")");
    }
    std::vector<Neighbor> lists(n * k_max);
    std::vector<Neighbor> row(n - 1);
    const auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        const auto xi = points.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            row[m++] = Neighbor{static_cast<std::uint32_t>(j), distance(xi, points.row(j))};
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k_max), row.end(), closer);
        std::copy_n(row.begin(), k_max, lists.begin() + static_cast<std::ptrdiff_t>(i * k_max));
    }
    return NeighborGraph(n, k_max, std::move(lists));
}

}  // namespace gatescope::geometry
