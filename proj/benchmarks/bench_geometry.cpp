#include <random>

#include <benchmark/benchmark.h>

#include "gatescope/geometry.hpp"

using namespace gatescope::geometry;

namespace {

PointSet cube(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> data(n * d);
    for (auto& x : data) x = u(rng);
    return PointSet(n, d, std::move(data));
}

void BM_KnnGraph(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto p = cube(n, 64, 1);
    for (auto _ : state) benchmark::DoNotOptimize(build_knn_graph(p, 32));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KnnGraph)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_Gride(benchmark::State& state) {
    const auto g = build_knn_graph(cube(2000, 5, 2), 32);
    for (auto _ : state) benchmark::DoNotOptimize(estimate_intrinsic_dimension(g, IdEstimator::gride(16)));
}
BENCHMARK(BM_Gride)->Unit(benchmark::kMicrosecond);

void BM_AdpCluster(benchmark::State& state) {
    const auto p = cube(1000, 8, 3);
    const auto g = build_knn_graph(p, 16);
    const auto dens = estimate_knn_density(g, 16, estimate_intrinsic_dimension(g, IdEstimator::twonn()));
    for (auto _ : state) benchmark::DoNotOptimize(adp_cluster(p, g, dens));
}
BENCHMARK(BM_AdpCluster)->Unit(benchmark::kMillisecond);

void BM_NeighborhoodOverlap(benchmark::State& state) {
    const auto p = cube(1000, 64, 4);
    std::vector<int> labels(p.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 20);
    const auto ref = GroundTruthRef::from_labels(labels);
    for (auto _ : state) benchmark::DoNotOptimize(neighborhood_overlap(p, ref, 30));
}
BENCHMARK(BM_NeighborhoodOverlap)->Unit(benchmark::kMillisecond);

}  // namespace
