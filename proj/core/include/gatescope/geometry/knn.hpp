#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gatescope/geometry/point_set.hpp"

namespace gatescope::geometry {

struct Neighbor {
    std::uint32_t index = 0;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact Euclidean k-nearest-neighbor lists. Each list excludes the point
/// itself and is sorted by (distance, index).
class NeighborGraph {
public:
    NeighborGraph() = default;
    NeighborGraph(std::size_t n, std::size_t k_max, std::vector<Neighbor> lists);

    std::size_t size() const { return n_; }
    std::size_t k_max() const { return k_max_; }

    std::span<const Neighbor> neighbors(std::size_t i) const { return {lists_.data() + i * k_max_, k_max_}; }
    /// First k entries of the list for point i.
    std::span<const Neighbor> neighbors(std::size_t i, std::size_t k) const { return neighbors(i).first(k); }
    /// Distance to the rank-th neighbor, rank counted from 1.
    double radius(std::size_t i, std::size_t rank) const { return lists_[i * k_max_ + rank - 1].distance; }
    bool contains(std::size_t i, std::size_t j, std::size_t k) const;

    friend bool operator==(const NeighborGraph&, const NeighborGraph&) = default;

private:
    std::size_t n_ = 0;
    std::size_t k_max_ = 0;
    std::vector<Neighbor> lists_;
};

/// O(n² d) brute force; the reference path for every geometry metric.
NeighborGraph build_knn_graph(const PointSet& points, std::size_t k_max);

}  // namespace gatescope::geometry
