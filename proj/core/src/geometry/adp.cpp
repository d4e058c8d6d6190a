#include "gatescope/geometry/adp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "gatescope/common/error.hpp"

namespace gatescope::geometry {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Saddle {
    double log_rho = -std::numeric_limits<double>::infinity();
    double err = 0.0;
    std::size_t point = 0;
};

using SaddleMap = std::map<std::pair<int, int>, Saddle>;

class Clustering {
public:
    Clustering(const PointSet& points, const NeighborGraph& graph, const DensityEstimate& density)
        : points_(points), graph_(graph), density_(density), k_(density.k_used) {}

    bool denser(std::size_t a, std::size_t b) const {
        const double ra = density_.log_rho[a];
        const double rb = density_.log_rho[b];
        return ra > rb || (ra == rb && a < b);
    }

    void find_peaks_and_assign() {
        const std::size_t n = points_.size();
        std::vector<std::size_t> finite;
        for (std::size_t i = 0; i < n; ++i) {
            if (density_.finite(i)) finite.push_back(i);
        }
        if (finite.empty()) throw NumericalError("ADP: every point has a zero k-th neighbor distance");

        std::vector<bool> peak(n, false);
        for (std::size_t i : finite) peak[i] = true;
        for (std::size_t i : finite) {
            for (const auto& nb : graph_.neighbors(i, k_)) {
                const std::size_t j = nb.index;
                if (!density_.finite(j)) continue;
                if (denser(j, i)) {
                    peak[i] = false;
                } else {
                    peak[j] = false;
                }
            }
        }

        std::sort(finite.begin(), finite.end(), [&](std::size_t a, std::size_t b) { return denser(a, b); });
        labels_.assign(n, -1);
        for (std::size_t i : finite) {
            if (peak[i]) {
                labels_[i] = static_cast<int>(peaks_.size());
                peaks_.push_back(i);
                continue;
            }
            int label = -1;
            for (const auto& nb : graph_.neighbors(i)) {
                if (density_.finite(nb.index) && denser(nb.index, i)) {
                    label = labels_[nb.index];
                    break;
                }
            }
            if (label < 0) {
                label = labels_[nearest_global(i, [&](std::size_t j) { return density_.finite(j) && denser(j, i); })];
            }
            labels_[i] = label;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (labels_[i] >= 0) continue;
            int label = -1;
            for (const auto& nb : graph_.neighbors(i)) {
                if (density_.finite(nb.index)) {
                    label = labels_[nb.index];
                    break;
                }
            }
            if (label < 0) {
                label = labels_[nearest_global(i, [&](std::size_t j) { return density_.finite(j); })];
            }
            labels_[i] = label;
        }
        active_.resize(peaks_.size());
        std::iota(active_.begin(), active_.end(), 0);
    }

    SaddleMap saddles() const {
        SaddleMap out;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (!density_.finite(i)) continue;
            const int a = labels_[i];
            for (const auto& nb : graph_.neighbors(i, k_)) {
                const std::size_t j = nb.index;
                if (!density_.finite(j)) continue;
                const int b = labels_[j];
                if (b == a) continue;
                if (graph_.contains(j, i, k_)) {
                    auto& s = out[{std::min(a, b), std::max(a, b)}];
                    if (density_.log_rho[i] > s.log_rho ||
                        (density_.log_rho[i] == s.log_rho && i < s.point)) {
                        s = Saddle{density_.log_rho[i], density_.err_log_rho[i], i};
                    }
                }
                break;
            }
        }
        return out;
    }

    double peak_statistic(int cluster, const Saddle& s) const {
        const std::size_t p = peaks_[static_cast<std::size_t>(cluster)];
        const double ep = density_.err_log_rho[p];
        return (density_.log_rho[p] - s.log_rho) / std::sqrt(ep * ep + s.err * s.err);
    }

    void merge_until_robust(double z, std::vector<MergeEvent>& log) {
        while (active_.size() > 1) {
            const auto sad = saddles();
            bool found = false;
            double worst = 0.0;
            std::pair<int, int> worst_pair;
            for (const auto& [pair, s] : sad) {
                const double stat = std::min(peak_statistic(pair.first, s), peak_statistic(pair.second, s));
                if (stat > z) continue;
                if (!found || stat < worst) {
                    found = true;
                    worst = stat;
                    worst_pair = pair;
                }
            }
            if (!found) return;
            auto [a, b] = worst_pair;
            if (denser(peaks_[static_cast<std::size_t>(b)], peaks_[static_cast<std::size_t>(a)])) std::swap(a, b);
            absorb(a, b);
            log.push_back(MergeEvent{static_cast<std::size_t>(a), static_cast<std::size_t>(b), worst, false});
        }
    }

    bool dissolve_small(std::size_t min_size, std::vector<MergeEvent>& log) {
        const auto sizes = current_sizes();
        std::vector<int> keep;
        std::vector<int> small;
        for (int c : active_) (sizes.at(c) >= min_size ? keep : small).push_back(c);
        if (small.empty()) return false;
        if (keep.empty()) {
            const auto largest = *std::max_element(small.begin(), small.end(), [&](int x, int y) {
                if (sizes.at(x) != sizes.at(y)) return sizes.at(x) < sizes.at(y);
                return denser(peaks_[static_cast<std::size_t>(y)], peaks_[static_cast<std::size_t>(x)]);
            });
            keep.push_back(largest);
            std::erase(small, largest);
        }
        for (int c : small) {
            const auto pc = points_.row(peaks_[static_cast<std::size_t>(c)]);
            int target = keep.front();
            double best = std::numeric_limits<double>::infinity();
            for (int t : keep) {
                const double d = squared_distance(pc, points_.row(peaks_[static_cast<std::size_t>(t)]));
                if (d < best) {
                    best = d;
                    target = t;
                }
            }
            absorb(target, c);
            log.push_back(MergeEvent{static_cast<std::size_t>(target), static_cast<std::size_t>(c), kNaN, true});
        }
        return true;
    }

    ClusterAssignment finish(std::vector<MergeEvent> log, bool saddles_undefined) const {
        std::vector<int> order = active_;
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            return denser(peaks_[static_cast<std::size_t>(x)], peaks_[static_cast<std::size_t>(y)]);
        });
        std::map<int, int> relabel;
        for (std::size_t c = 0; c < order.size(); ++c) relabel[order[c]] = static_cast<int>(c);

        ClusterAssignment out;
        out.labels.resize(labels_.size());
        for (std::size_t i = 0; i < labels_.size(); ++i) out.labels[i] = relabel.at(labels_[i]);
        for (int c : order) out.peaks.push_back(peaks_[static_cast<std::size_t>(c)]);
        const std::size_t nc = order.size();
        out.saddle_matrix.assign(nc * nc, kNaN);
        out.saddle_err_matrix.assign(nc * nc, kNaN);
        std::vector<double> max_saddle(nc, -std::numeric_limits<double>::infinity());
        for (const auto& [pair, s] : saddles()) {
            const auto a = static_cast<std::size_t>(relabel.at(pair.first));
            const auto b = static_cast<std::size_t>(relabel.at(pair.second));
            out.saddle_matrix[a * nc + b] = out.saddle_matrix[b * nc + a] = s.log_rho;
            out.saddle_err_matrix[a * nc + b] = out.saddle_err_matrix[b * nc + a] = s.err;
            max_saddle[a] = std::max(max_saddle[a], s.log_rho);
            max_saddle[b] = std::max(max_saddle[b], s.log_rho);
        }
        out.halo.assign(labels_.size(), false);
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (!density_.finite(i)) continue;
            out.halo[i] = density_.log_rho[i] < max_saddle[static_cast<std::size_t>(out.labels[i])];
        }
        out.merge_log = std::move(log);
        out.saddles_undefined = saddles_undefined;
        return out;
    }

    std::size_t n_active() const { return active_.size(); }

private:
    template <typename Pred>
    std::size_t nearest_global(std::size_t i, Pred eligible) const {
        std::size_t best = points_.size();
        double best_d = std::numeric_limits<double>::infinity();
        const auto xi = points_.row(i);
        for (std::size_t j = 0; j < points_.size(); ++j) {
            if (j == i || !eligible(j)) continue;
            const double d = squared_distance(xi, points_.row(j));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best == points_.size()) throw NumericalError("ADP: no eligible point to inherit a label from");
        return best;
    }

    void absorb(int survivor, int absorbed) {
        for (auto& l : labels_) {
            if (l == absorbed) l = survivor;
        }
        std::erase(active_, absorbed);
    }

    std::map<int, std::size_t> current_sizes() const {
        std::map<int, std::size_t> sizes;
        for (int c : active_) sizes[c] = 0;
        for (int l : labels_) ++sizes[l];
        return sizes;
    }

    const PointSet& points_;
    const NeighborGraph& graph_;
    const DensityEstimate& density_;
    std::size_t k_;
    std::vector<int> labels_;
    std::vector<std::size_t> peaks_;
    std::vector<int> active_;
};

}  // namespace

std::optional<double> ClusterAssignment::saddle_log_rho(std::size_t a, std::size_t b) const {
    const double v = saddle_matrix.at(a * n_clusters() + b);
    if (std::isnan(v)) return std::nullopt;
    return v;
}

std::optional<double> ClusterAssignment::saddle_err(std::size_t a, std::size_t b) const {
    const double v = saddle_err_matrix.at(a * n_clusters() + b);
    if (std::isnan(v)) return std::nullopt;
    return v;
}

std::vector<std::size_t> ClusterAssignment::cluster_sizes() const {
    std::vector<std::size_t> sizes(n_clusters(), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

ClusterAssignment adp_cluster(const PointSet& points, const NeighborGraph& graph, const DensityEstimate& density,
                              AdpOptions options) {
    require(points.size() == graph.size() && graph.size() == density.size(),
            "ADP: points, graph and density must describe the same set");
    require(density.k_used >= 1 && density.k_used <= graph.k_max(), "ADP: density k exceeds graph k_max");
    require(options.z > 0.0, "ADP: Z must be positive");

    Clustering clustering(points, graph, density);
    clustering.find_peaks_and_assign();

    std::vector<MergeEvent> log;
    if (clustering.n_active() > 1 && clustering.saddles().empty()) {
        return clustering.finish(std::move(log), true);
    }
    do {
        clustering.merge_until_robust(options.z, log);
    } while (options.min_size > 1 && clustering.dissolve_small(options.min_size, log));
    return clustering.finish(std::move(log), false);
}

}  // namespace gatescope::geometry
