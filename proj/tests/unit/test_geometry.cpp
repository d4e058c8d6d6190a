#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gatescope/common/error.hpp"
#include "gatescope/geometry.hpp"
#include "test_support.hpp"

using namespace gatescope;
using namespace gatescope::geometry;
using gatescope::testing::gaussian_blobs;
using gatescope::testing::TempDir;
using gatescope::testing::uniform_cube;

namespace {

PointSet line(std::vector<double> xs) {
    const std::size_t n = xs.size();
    return PointSet(n, 1, std::move(xs));
}

/// Independent full-sort oracle for the neighbor lists.
std::vector<std::vector<std::pair<double, std::uint32_t>>> sorted_neighbors(const PointSet& p) {
    std::vector<std::vector<std::pair<double, std::uint32_t>>> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (i == j) continue;
            double s = 0.0;
            for (std::size_t k = 0; k < p.dim(); ++k) s += (p.row(i)[k] - p.row(j)[k]) * (p.row(i)[k] - p.row(j)[k]);
            out[i].emplace_back(std::sqrt(s), static_cast<std::uint32_t>(j));
        }
        std::sort(out[i].begin(), out[i].end());
    }
    return out;
}

/// Gride log-likelihood, maximized by golden-section search.
double gride_oracle(const NeighborGraph& g, std::size_t k) {
    std::vector<double> mu;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double rk = g.radius(i, k), r2k = g.radius(i, 2 * k);
        if (rk > 0 && r2k > rk) mu.push_back(r2k / rk);
    }
    const double kk = static_cast<double>(k);
    const double log_beta = 2 * std::lgamma(kk) - std::lgamma(2 * kk);
    const auto ll = [&](double d) {
        double s = 0.0;
        for (double m : mu)
            s += std::log(d) + (kk - 1) * std::log(std::pow(m, d) - 1) - log_beta - (d * (2 * kk - 1) + 1) * std::log(m);
        return s;
    };
    double a = 0.05, b = 60.0;
    const double phi = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 200; ++it) {
        const double c = b - phi * (b - a), d = a + phi * (b - a);
        if (ll(c) > ll(d)) b = d; else a = c;
    }
    return 0.5 * (a + b);
}

std::vector<double> random_rotation_embed(const PointSet& p, std::size_t D, std::uint64_t seed) {
    // Orthonormal frame by Gram-Schmidt on Gaussian columns.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> basis;
    while (basis.size() < p.dim()) {
        std::vector<double> v(D);
        for (auto& x : v) x = g(rng);
        for (const auto& b : basis) {
            const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
            for (std::size_t i = 0; i < D; ++i) v[i] -= dot * b[i];
        }
        const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        for (auto& x : v) x /= n;
        basis.push_back(v);
    }
    std::vector<double> out(p.size() * D, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t a = 0; a < p.dim(); ++a)
            for (std::size_t k = 0; k < D; ++k) out[i * D + k] += p.row(i)[a] * basis[a][k];
    return out;
}

}  // namespace

TEST(PointSet, RejectsInvalidShapesAndValues) {
    EXPECT_THROW(PointSet(0, 2, {}), ConfigError);
    EXPECT_THROW(PointSet(2, 2, {1, 2, 3}), ConfigError);
    EXPECT_THROW(PointSet(1, 2, {1, NAN}), ConfigError);
    EXPECT_THROW(PointSet(2, 1, {1, 2}, {5, 5}), ConfigError);
    const PointSet p(3, 1, {1, 2, 3}, {10, 20, 30});
    const std::vector<std::size_t> rows = {2, 0};
    const auto s = p.select(rows);
    EXPECT_EQ(s.size(), 2u);
    EXPECT_EQ(s.row(0)[0], 3.0);
    EXPECT_EQ(s.ids()[1], 10);
}

TEST(PointSet, SaveLoadRoundTripAtFloatPrecision) {
    TempDir dir("points");
    const auto p = uniform_cube(17, 3, 1);
    save_point_set(dir.path() / "p.json", p);
    const auto q = load_point_set(dir.path() / "p.json");
    ASSERT_EQ(q.size(), 17u);
    ASSERT_EQ(q.dim(), 3u);
    for (std::size_t i = 0; i < p.data().size(); ++i)
        EXPECT_EQ(q.data()[i], static_cast<double>(static_cast<float>(p.data()[i])));
    const std::vector<std::string> labels = {"a", "b", "c"};
    save_labels(dir.path() / "l.txt", labels);
    EXPECT_EQ(load_labels(dir.path() / "l.txt"), labels);
}

TEST(Knn, HandExampleOnALine) {
    const auto g = build_knn_graph(line({0, 1, 3}), 1);
    EXPECT_EQ(g.neighbors(0)[0].index, 1u);
    EXPECT_EQ(g.neighbors(1)[0].index, 0u);
    EXPECT_EQ(g.neighbors(2)[0].index, 1u);
    EXPECT_EQ(g.radius(2, 1), 2.0);
}

TEST(Knn, TiesBrokenByLowerIndexAndSelfExcluded) {
    // Points 0 and 2 coincide; point 1 is equidistant from 3 and 4.
    const auto g = build_knn_graph(PointSet(5, 1, {0, 5, 0, 4, 6}), 4);
    EXPECT_EQ(g.neighbors(0)[0].index, 2u);
    EXPECT_EQ(g.neighbors(0)[0].distance, 0.0);
    EXPECT_EQ(g.neighbors(2)[0].index, 0u);
    EXPECT_EQ(g.neighbors(1)[0].index, 3u);
    EXPECT_EQ(g.neighbors(1)[1].index, 4u);
    for (std::size_t i = 0; i < 5; ++i)
        for (const auto& nb : g.neighbors(i)) EXPECT_NE(nb.index, i);
}

TEST(Knn, FullNeighborhoodIsAPermutationOfOthers) {
    const auto p = uniform_cube(30, 4, 2);
    const auto g = build_knn_graph(p, 29);
    for (std::size_t i = 0; i < 30; ++i) {
        std::vector<std::uint32_t> idx;
        for (const auto& nb : g.neighbors(i)) idx.push_back(nb.index);
        std::sort(idx.begin(), idx.end());
        std::vector<std::uint32_t> expected;
        for (std::uint32_t j = 0; j < 30; ++j)
            if (j != i) expected.push_back(j);
        EXPECT_EQ(idx, expected);
    }
}

TEST(Knn, MatchesFullSortOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng() % 60, d = 1 + rng() % 5, k = 1 + rng() % (n - 1);
        // Coarse integer grid forces distance ties.
        std::vector<double> data(n * d);
        for (auto& x : data) x = static_cast<double>(rng() % 4);
        const PointSet p(n, d, data);
        const auto g = build_knn_graph(p, k);
        const auto oracle = sorted_neighbors(p);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t r = 0; r < k; ++r) {
                EXPECT_EQ(g.neighbors(i)[r].index, oracle[i][r].second);
                EXPECT_EQ(g.neighbors(i)[r].distance, oracle[i][r].first);
            }
    }
}

TEST(Knn, RejectsOutOfRangeK) {
    const auto p = uniform_cube(5, 2, 3);
    EXPECT_THROW(build_knn_graph(p, 0), ConfigError);
    EXPECT_THROW(build_knn_graph(p, 5), ConfigError);
    EXPECT_NO_THROW(build_knn_graph(p, 4));
}

TEST(IntrinsicDimension, TwoNNMatchesClosedForm) {
    const auto p = uniform_cube(300, 3, 4);
    const auto g = build_knn_graph(p, 2);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::log(g.radius(i, 2) / g.radius(i, 1));
    EXPECT_NEAR(estimate_intrinsic_dimension(g, IdEstimator::twonn()), 300.0 / s, 1e-12);
}

TEST(IntrinsicDimension, TwoNNSkipsZeroFirstDistance) {
    // 0 and 1 coincide, so their r1 = 0 and they drop out. Ratios left: 1, 3/2, 6/4.
    const PointSet p(5, 1, {0, 0, 1, 3, 7});
    const auto g = build_knn_graph(p, 2);
    const double expected = 3.0 / (2.0 * std::log(1.5));
    EXPECT_NEAR(estimate_intrinsic_dimension(g, IdEstimator::twonn()), expected, 1e-12);
}

TEST(IntrinsicDimension, GrideMatchesLikelihoodOracle) {
    for (std::size_t d : {2u, 4u}) {
        const auto p = uniform_cube(800, d, 10 + d);
        const auto g = build_knn_graph(p, 16);
        for (std::size_t k : {1u, 4u, 8u}) {
            const double est = estimate_intrinsic_dimension(g, IdEstimator::gride(k));
            EXPECT_NEAR(est, gride_oracle(g, k), 1e-3 * est) << "d=" << d << " k=" << k;
        }
    }
}

TEST(IntrinsicDimension, GrideOneEqualsTwoNN) {
    const auto g = build_knn_graph(uniform_cube(400, 3, 8), 2);
    EXPECT_NEAR(estimate_intrinsic_dimension(g, IdEstimator::gride(1)),
                estimate_intrinsic_dimension(g, IdEstimator::twonn()), 1e-6);
}

TEST(IntrinsicDimension, SegmentEmbeddedInTenDimensions) {
    const auto seg = uniform_cube(2000, 1, 21);
    const PointSet p(2000, 10, random_rotation_embed(seg, 10, 22));
    const double d = estimate_intrinsic_dimension(build_knn_graph(p, 2), IdEstimator::twonn());
    EXPECT_GE(d, 0.9);
    EXPECT_LE(d, 1.1);
}

TEST(IntrinsicDimension, FiveDimensionalCubeWithinFifteenPercent) {
    const auto g = build_knn_graph(uniform_cube(2000, 5, 23), 2);
    const double d = estimate_intrinsic_dimension(g, IdEstimator::twonn());
    EXPECT_GE(d, 4.25);
    EXPECT_LE(d, 5.75);
}

TEST(IntrinsicDimension, DegenerateInputsThrow) {
    EXPECT_THROW(estimate_intrinsic_dimension(build_knn_graph(line({0, 1}), 1), IdEstimator::twonn()),
                 ConfigError);
    const PointSet all_same(4, 1, {2, 2, 2, 2});
    EXPECT_THROW(estimate_intrinsic_dimension(build_knn_graph(all_same, 2), IdEstimator::twonn()), NumericalError);
    EXPECT_THROW(estimate_intrinsic_dimension(build_knn_graph(uniform_cube(20, 2, 1), 5), IdEstimator::gride(3)),
                 ConfigError);
}

TEST(Density, UnitBallVolumes) {
    EXPECT_NEAR(log_unit_ball_volume(1), std::log(2.0), 1e-12);
    EXPECT_NEAR(log_unit_ball_volume(2), std::log(std::numbers::pi), 1e-12);
    EXPECT_NEAR(log_unit_ball_volume(3), std::log(4.0 * std::numbers::pi / 3.0), 1e-12);
}

TEST(Density, HandFormula) {
    // 100 points whose 4th neighbor is at distance 1.
    const std::size_t n = 100, k = 4;
    std::vector<Neighbor> lists;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < k; ++r)
            lists.push_back({static_cast<std::uint32_t>((i + r + 1) % n), r + 1 == k ? 1.0 : 0.5});
    const NeighborGraph g(n, k, lists);
    const auto est = estimate_knn_density(g, k, 2.0);
    EXPECT_NEAR(std::exp(est.log_rho[7]), 4.0 / (100.0 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(std::exp(est.log_rho[7]), 0.012732, 1e-6);
    EXPECT_NEAR(est.err_log_rho[7], 0.5, 1e-15);
}

TEST(Density, ScalingShiftsLogDensityByDLogC) {
    const auto p = uniform_cube(200, 2, 31);
    std::vector<double> scaled = p.data();
    for (auto& x : scaled) x *= 3.0;
    const auto a = estimate_knn_density(build_knn_graph(p, 8), 8, 2.0);
    const auto b = estimate_knn_density(build_knn_graph(PointSet(200, 2, scaled), 8), 8, 2.0);
    for (std::size_t i = 0; i < 200; ++i) EXPECT_NEAR(b.log_rho[i] - a.log_rho[i], -2.0 * std::log(3.0), 1e-9);
}

TEST(Density, UniformGridInteriorIsFlat) {
    std::vector<double> data;
    const int side = 30;
    for (int x = 0; x < side; ++x)
        for (int y = 0; y < side; ++y) {
            data.push_back(x);
            data.push_back(y);
        }
    const PointSet p(side * side, 2, data);
    const auto est = estimate_knn_density(build_knn_graph(p, 8), 8, 2.0);
    std::vector<double> interior;
    for (int x = 3; x < side - 3; ++x)
        for (int y = 3; y < side - 3; ++y) interior.push_back(est.log_rho[static_cast<std::size_t>(x * side + y)]);
    const double mean = std::accumulate(interior.begin(), interior.end(), 0.0) / static_cast<double>(interior.size());
    double var = 0.0;
    for (double v : interior) var += (v - mean) * (v - mean);
    EXPECT_LT(std::sqrt(var / static_cast<double>(interior.size())), 0.1);
}

TEST(Density, ZeroRadiusIsInfiniteSentinel) {
    const PointSet p(4, 1, {0, 0, 5, 9});
    const auto est = estimate_knn_density(build_knn_graph(p, 1), 1, 1.0);
    EXPECT_TRUE(std::isinf(est.log_rho[0]) && est.log_rho[0] > 0);
    EXPECT_FALSE(est.finite(1));
    EXPECT_TRUE(est.finite(2));
    EXPECT_EQ(est.infinite_count(), 2u);
}

namespace {

ClusterAssignment cluster(const PointSet& p, std::size_t k, AdpOptions opt = {}) {
    const auto g = build_knn_graph(p, k);
    const double id = estimate_intrinsic_dimension(g, IdEstimator::twonn());
    return adp_cluster(p, g, estimate_knn_density(g, k, id), opt);
}

}  // namespace

TEST(Adp, SeparatedBlobsAreRecovered) {
    std::vector<int> truth;
    const auto p = gaussian_blobs({{0, 0, 0}, {12, 0, 0}, {0, 12, 0}}, 150, 1.0, 41, &truth);
    const auto c = cluster(p, 16);
    EXPECT_EQ(c.n_clusters(), 3u);
    EXPECT_GE(homogeneity(c.labels, truth), 0.95);
    EXPECT_FALSE(c.saddles_undefined);
}

TEST(Adp, SingleBlobIsOneCluster) {
    const auto p = gaussian_blobs({{0, 0, 0, 0, 0}}, 400, 1.0, 42);
    const auto c = cluster(p, 16);
    EXPECT_EQ(c.n_clusters(), 1u);
    for (int l : c.labels) EXPECT_EQ(l, 0);
}

TEST(Adp, ClusterCountNonincreasingInZ) {
    const auto p = gaussian_blobs({{0, 0}, {4, 0}, {0, 4}, {4, 4}}, 80, 1.0, 43);
    std::size_t previous = p.size();
    for (double z : {0.1, 0.5, 1.0, 1.65, 3.0, 6.0}) {
        const auto c = cluster(p, 10, {z, 1});
        EXPECT_LE(c.n_clusters(), previous) << "z=" << z;
        previous = c.n_clusters();
    }
}

TEST(Adp, PeaksAreDensestOfTheirClusterAndLabelsDense) {
    const auto p = gaussian_blobs({{0, 0}, {10, 10}}, 100, 1.0, 44);
    const auto g = build_knn_graph(p, 12);
    const auto dens = estimate_knn_density(g, 12, estimate_intrinsic_dimension(g, IdEstimator::twonn()));
    const auto c = adp_cluster(p, g, dens);
    ASSERT_EQ(c.n_clusters(), 2u);
    for (std::size_t i = 0; i < p.size(); ++i) {
        ASSERT_GE(c.labels[i], 0);
        EXPECT_LE(dens.log_rho[i], dens.log_rho[c.peaks[static_cast<std::size_t>(c.labels[i])]]);
    }
    const auto sizes = c.cluster_sizes();
    EXPECT_EQ(sizes[0] + sizes[1], p.size());
}

TEST(Adp, SmallClustersAreDissolved) {
    // A 10-point satellite far from a 200-point blob cannot survive min_size = 20.
    auto centers = std::vector<std::vector<double>>{{0, 0}};
    const auto big = gaussian_blobs(centers, 200, 1.0, 45);
    const auto small = gaussian_blobs({{30, 30}}, 10, 0.5, 46);
    std::vector<double> data = big.data();
    data.insert(data.end(), small.data().begin(), small.data().end());
    const PointSet p(210, 2, data);
    EXPECT_EQ(cluster(p, 8, {1.65, 20}).n_clusters(), 1u);
    EXPECT_EQ(cluster(p, 8, {1.65, 5}).n_clusters(), 2u);
}

TEST(Homogeneity, HandExamples) {
    const std::vector<std::string> truth = {"A", "A", "B", "B"};
    EXPECT_DOUBLE_EQ(homogeneity(std::vector<int>{0, 0, 1, 1}, truth), 1.0);
    EXPECT_DOUBLE_EQ(homogeneity(std::vector<int>{0, 0, 0, 0}, truth), 0.0);
    EXPECT_NEAR(homogeneity(std::vector<int>{0, 1, 0, 1}, truth), 0.0, 1e-15);
    const std::vector<std::string> single = {"A", "A", "A"};
    EXPECT_DOUBLE_EQ(homogeneity(std::vector<int>{0, 1, 2}, single), 1.0);
}

TEST(Homogeneity, MatchesContingencyOracle) {
    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + rng() % 100;
        std::vector<int> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng() % 4);
            truth[i] = static_cast<int>(rng() % 3);
        }
        std::map<std::pair<int, int>, double> joint;
        std::map<int, double> pc, pk;
        for (std::size_t i = 0; i < n; ++i) {
            joint[{truth[i], pred[i]}] += 1.0 / n;
            pc[truth[i]] += 1.0 / n;
            pk[pred[i]] += 1.0 / n;
        }
        double hc = 0.0, hck = 0.0;
        for (auto [c, p] : pc) hc -= p * std::log(p);
        for (auto [ck, p] : joint) hck -= p * std::log(p / pk[ck.second]);
        const double expected = hc == 0.0 ? 1.0 : 1.0 - hck / hc;
        EXPECT_NEAR(homogeneity(pred, truth), expected, 1e-12);
    }
}

TEST(NeighborhoodOverlap, HandExamples) {
    const auto p = line({0, 0.1, 10, 10.1});
    const std::vector<std::string> aabb = {"A", "A", "B", "B"}, abab = {"A", "B", "A", "B"};
    EXPECT_DOUBLE_EQ(neighborhood_overlap(p, GroundTruthRef::from_labels(aabb), 1).chi, 1.0);
    EXPECT_DOUBLE_EQ(neighborhood_overlap(p, GroundTruthRef::from_labels(abab), 1).chi, 0.0);
}

TEST(NeighborhoodOverlap, SelfReferenceIsOne) {
    const auto p = uniform_cube(150, 6, 60);
    EXPECT_DOUBLE_EQ(neighborhood_overlap(p, GroundTruthRef::from_points(p), 10).chi, 1.0);
}

TEST(NeighborhoodOverlap, IsolatedLabelsContributeZero) {
    const auto p = line({0, 1, 2, 10});
    const auto r = neighborhood_overlap(p, GroundTruthRef::from_labels(std::vector<int>{0, 0, 0, 1}), 1);
    EXPECT_EQ(r.isolated_points, 1u);
    EXPECT_DOUBLE_EQ(r.chi, 0.75);
}

TEST(NeighborhoodOverlap, MatchesDirectCountOracle) {
    const auto p = uniform_cube(80, 3, 61);
    const auto q = uniform_cube(80, 3, 62);
    const std::size_t k = 7;
    const auto np = sorted_neighbors(p), nq = sorted_neighbors(q);
    double total = 0.0;
    for (std::size_t i = 0; i < 80; ++i)
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) total += np[i][a].second == nq[i][b].second;
    EXPECT_NEAR(neighborhood_overlap(p, GroundTruthRef::from_points(q), k).chi, total / (80.0 * k), 1e-15);
    EXPECT_THROW(neighborhood_overlap(p, GroundTruthRef::from_points(uniform_cube(79, 3, 1)), k), ConfigError);
}

TEST(CosineGap, HandExamples) {
    const PointSet e1(1, 3, {1, 0, 0}), e2(1, 3, {0, 1, 0});
    EXPECT_DOUBLE_EQ(cosine_gap(e1, e1, 10, 1).median, 1.0);
    EXPECT_DOUBLE_EQ(cosine_gap(e1, e2, 10, 1).median, 0.0);
}

TEST(CosineGap, IndependentGaussiansConcentrateAtZero) {
    std::mt19937_64 rng(70);
    std::normal_distribution<double> g;
    std::vector<double> a(200 * 512), b(200 * 512);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    const auto s = cosine_gap(PointSet(200, 512, a), PointSet(200, 512, b), 10000, 3);
    EXPECT_GE(s.median, -0.05);
    EXPECT_LE(s.median, 0.05);
    EXPECT_LE(s.q25, s.median);
    EXPECT_GE(s.q75, s.median);
}

TEST(CosineGap, DeterministicPerSeedAndResamplesZeroVectors) {
    const PointSet a(3, 2, {0, 0, 1, 0, 1, 1});
    const PointSet b(2, 2, {1, 0, 0, 1});
    const auto x = cosine_gap(a, b, 50, 9), y = cosine_gap(a, b, 50, 9);
    EXPECT_EQ(x.median, y.median);
    EXPECT_EQ(x.q25, y.q25);
    EXPECT_GT(x.resampled, 0u);
    const PointSet zeros(2, 2, {0, 0, 0, 0});
    EXPECT_THROW(cosine_gap(zeros, b, 5, 1), NumericalError);
}

TEST(Quantile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.25), 2.5);
}
