// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "gatescope/experiments.hpp"
#include "gatescope/geometry.hpp"
#include "gatescope/tasks.hpp"
#include "gatescope/training.hpp"
#include "gatescope/transformer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace gatescope;
using gatescope::testing::gaussian_blobs;
using gatescope::testing::uniform_cube;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Geometry

/// Full-sort neighbor oracle: (distance, index) pairs ordered by distance then index.
std::vector<std::vector<std::pair<double, std::uint32_t>>> sorted_neighbors(const geometry::PointSet& p) {
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

Outcome knn_matches_oracle() {
    std::mt19937_64 rng(101);
    std::size_t mismatches = 0, checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 199, d = 1 + rng() % 8, k = 1 + rng() % std::min<std::size_t>(n - 1, 40);
        std::vector<double> data(n * d);
        // Every third instance sits on a coarse grid so distance ties occur.
        if (trial % 3 == 0)
            for (auto& x : data) x = static_cast<double>(rng() % 4);
        else
            for (auto& x : data) x = std::uniform_real_distribution<double>(-1, 1)(rng);
        const geometry::PointSet p(n, d, data);
        const auto g = geometry::build_knn_graph(p, k);
        const auto oracle = sorted_neighbors(p);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t r = 0; r < k; ++r) {
                ++checked;
                if (g.neighbors(i)[r].index != oracle[i][r].second || g.neighbors(i)[r].distance != oracle[i][r].first)
                    ++mismatches;
            }
    }
    return {mismatches == 0, std::to_string(checked) + " neighbor slots, " + std::to_string(mismatches) + " mismatches"};
}

Outcome intrinsic_dimension_on_cubes() {
    bool pass = true;
    std::string detail;
    for (std::size_t d : {1u, 2u, 5u, 8u}) {
        double worst_twonn = 0.0, worst_gride = 0.0;
        double twonn_lo = 1e9, twonn_hi = 0, gride_lo = 1e9, gride_hi = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto g = geometry::build_knn_graph(uniform_cube(2000, d, 1000 + 10 * d + seed), 32);
            const double t = geometry::estimate_intrinsic_dimension(g, geometry::IdEstimator::twonn());
            const double r = geometry::estimate_intrinsic_dimension(g, geometry::IdEstimator::gride(16));
            worst_twonn = std::max(worst_twonn, std::abs(t - d) / d);
            worst_gride = std::max(worst_gride, std::abs(r - d) / d);
            twonn_lo = std::min(twonn_lo, t), twonn_hi = std::max(twonn_hi, t);
            gride_lo = std::min(gride_lo, r), gride_hi = std::max(gride_hi, r);
        }
        pass = pass && worst_twonn <= 0.15 && worst_gride <= 0.15;
        detail += "d=" + std::to_string(d) + " twonn [" + fmt("%.2f", twonn_lo) + "," + fmt("%.2f", twonn_hi) +
                  "] gride16 [" + fmt("%.2f", gride_lo) + "," + fmt("%.2f", gride_hi) + "]; ";
    }
    return {pass, detail};
}

geometry::ClusterAssignment adp(const geometry::PointSet& p, std::size_t k, double z) {
    const auto g = geometry::build_knn_graph(p, k);
    const double id = geometry::estimate_intrinsic_dimension(g, geometry::IdEstimator::twonn());
    return geometry::adp_cluster(p, g, geometry::estimate_knn_density(g, k, id), {z, 20});
}

Outcome adp_recovers_blobs() {
    std::vector<int> truth;
    const std::vector<std::vector<double>> centers = {{0, 0, 0, 0, 0}, {10, 0, 0, 0, 0}, {0, 10, 0, 0, 0}};
    const auto three = gaussian_blobs(centers, 300, 1.0, 201, &truth);
    const auto c3 = adp(three, 16, 1.65);
    const double h = geometry::homogeneity(c3.labels, truth);
    const auto c1 = adp(gaussian_blobs({{0, 0, 0, 0, 0}}, 900, 1.0, 202), 16, 1.65);

    const auto fixed = gaussian_blobs({{0, 0}, {4, 0}, {0, 4}, {4, 4}}, 100, 1.0, 203);
    std::vector<std::size_t> counts;
    for (double z : {0.1, 0.5, 1.0, 1.65, 2.5, 4.0, 8.0}) counts.push_back(adp(fixed, 10, z).n_clusters());
    const bool monotone = std::is_sorted(counts.rbegin(), counts.rend());
    std::string seq;
    for (auto c : counts) seq += std::to_string(c) + " ";
    return {c3.n_clusters() == 3 && h >= 0.95 && c1.n_clusters() == 1 && monotone,
            "three blobs: " + std::to_string(c3.n_clusters()) + " clusters, homogeneity " + fmt("%.4f", h) +
                "; one blob: " + std::to_string(c1.n_clusters()) + " cluster(s); counts over rising Z: " + seq};
}

Outcome neighborhood_overlap_properties() {
    using geometry::GroundTruthRef;
    const auto p = uniform_cube(300, 6, 301);
    const double self = geometry::neighborhood_overlap(p, GroundTruthRef::from_points(p), 10).chi;

    // Shuffled equal-size labels: E[chi] = (n/c - 1)/(n - 1).
    const std::size_t n = 300, c = 5, k = 10, reps = 400;
    const auto graph = geometry::build_knn_graph(p, k);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);
    std::mt19937_64 rng(302);
    std::vector<double> chis;
    for (std::size_t r = 0; r < reps; ++r) {
        std::shuffle(labels.begin(), labels.end(), rng);
        chis.push_back(geometry::neighborhood_overlap(graph, GroundTruthRef::from_labels(labels), k).chi);
    }
    const double mean = std::accumulate(chis.begin(), chis.end(), 0.0) / reps;
    double var = 0.0;
    for (double x : chis) var += (x - mean) * (x - mean) / (reps - 1);
    const double se = std::sqrt(var / reps);
    const double chance = (static_cast<double>(n) / c - 1.0) / (n - 1.0);

    const geometry::PointSet line(4, 1, {0, 0.1, 10, 10.1});
    const std::vector<std::string> aabb = {"A", "A", "B", "B"}, abab = {"A", "B", "A", "B"};
    const double h1 = geometry::neighborhood_overlap(line, GroundTruthRef::from_labels(aabb), 1).chi;
    const double h2 = geometry::neighborhood_overlap(line, GroundTruthRef::from_labels(abab), 1).chi;
    const bool pass = self == 1.0 && std::abs(mean - chance) <= 3 * se && h1 == 1.0 && h2 == 0.0;
    return {pass, "self " + fmt("%.17g", self) + "; shuffled mean " + fmt("%.5f", mean) + " vs chance " +
                      fmt("%.5f", chance) + " (3 SE = " + fmt("%.5f", 3 * se) + "); hand examples " +
                      fmt("%g", h1) + ", " + fmt("%g", h2)};
}

// ---------------------------------------------------------------------------
// Transformer

const tasks::Vocabulary& micro_vocab() {
    static const tasks::Vocabulary v(16, 4);
    return v;
}

transformer::TokenSequence random_sequence(std::size_t image_length, std::size_t text_length, std::mt19937_64& rng) {
    const auto& v = micro_vocab();
    transformer::TokenSequence s;
    const auto push = [&](transformer::TokenId id) {
        s.ids.push_back(id);
        s.modality.push_back(v.modality(id));
    };
    push(v.bos());
    push(v.boi());
    for (std::size_t i = 0; i < image_length; ++i) push(v.image_code(rng() % v.n_image_codes()));
    s.n_eoi = s.ids.size();
    push(v.eoi());
    for (std::size_t i = 0; i < text_length; ++i) push(v.class_name(rng() % v.n_classes()));
    return s;
}

transformer::Weights micro_weights(std::uint64_t seed, std::size_t n_layers = 2) {
    auto c = gatescope::testing::micro_model(micro_vocab(), 24, n_layers);
    c.seed = seed;
    c.init_std = 0.3;
    return transformer::Weights::initialize(c);
}

Outcome attention_profile_properties() {
    std::mt19937_64 rng(501);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto w = micro_weights(500 + trial);
        const auto seq = random_sequence(2 + rng() % 8, 1 + rng() % 6, rng);
        const auto f = transformer::cross_modal_attention_profile(transformer::forward(w, seq), seq.n_eoi);
        for (const auto& layer : f.share)
            worst = std::max(worst, std::abs(std::accumulate(layer.begin(), layer.end(), 0.0) - 1.0));
    }
    transformer::ForwardTrace t(5, 1, 1, 1, 1, transformer::CaptureFlags{false, true});
    const double rows[2][3] = {{0.2, 0.3, 0.1}, {0.1, 0.1, 0.2}};
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < 3; ++j) t.attention(0, 0, 3 + r, j) = rows[r][j];
    const auto f = transformer::cross_modal_attention_profile(t, 2);
    // The decimal inputs are not representable, so "exact" means equal up to that input rounding.
    const auto same = [](double x, double y) { return std::abs(x - y) <= 4 * std::numeric_limits<double>::epsilon() * y; };
    const bool hand = same(f.share[0][0], 0.3) && same(f.share[0][1], 0.4) && same(f.share[0][2], 0.3);
    return {worst <= 1e-6 && hand, "max |sum - 1| over 50 traces " + fmt("%.3g", worst) + "; hand example (" +
                                       fmt("%.17g", f.share[0][0]) + ", " + fmt("%.17g", f.share[0][1]) + ", " +
                                       fmt("%.17g", f.share[0][2]) + ")"};
}

Outcome similarity_properties() {
    std::mt19937_64 rng(601);
    std::exponential_distribution<double> ex(1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 30;
        std::vector<double> q(n), p(n);
        for (auto& v : q) v = ex(rng);
        for (auto& v : p) v = ex(rng);
        const double sq = std::accumulate(q.begin(), q.end(), 0.0), sp = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : q) v /= sq;
        for (auto& v : p) v /= sp;
        double l1 = 0;
        for (std::size_t i = 0; i < n; ++i) l1 += std::abs(q[i] - p[i]);
        worst = std::max(worst, std::abs(transformer::distribution_similarity(q, p) - (1.0 - 0.5 * l1)));
    }
    const double hand = transformer::distribution_similarity(std::vector<double>{0.2, 0.5, 0.3},
                                                             std::vector<double>{0.6, 0.3, 0.1});
    return {worst <= 1e-10 && hand == 0.6,
            "max deviation over 1000 pairs " + fmt("%.3g", worst) + "; hand example " + fmt("%.17g", hand)};
}

Outcome knockout_soundness() {
    using namespace transformer;
    std::mt19937_64 rng(701);
    const auto w = micro_weights(7);
    const std::size_t V = w.config.vocab_size;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_sequence(8, 6, rng);
        auto b = a;
        for (std::size_t p = 2; p < a.n_eoi; ++p) b.ids[p] = micro_vocab().image_code(rng() % 16);
        // Text queries blocked from every earlier position up to [EOI], at every layer.
        KnockoutSpec gate;
        KnockoutEdge e;
        e.layers = {0, 1};
        for (std::size_t q = a.n_eoi + 1; q < a.size(); ++q) e.queries.push_back(q);
        for (std::size_t k = 0; k <= a.n_eoi; ++k) e.keys.push_back(k);
        gate.edges.push_back(e);
        const auto la = forward_logits(w, a, gate), lb = forward_logits(w, b, gate);
        for (std::size_t i = (a.n_eoi + 1) * V; i < la.size(); ++i)
        {
            const double x = la[i], y = lb[i];
            worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-6}));
        }
    }

    bool earlier_bitwise = true;
    const auto w3 = micro_weights(8, 3);
    for (int trial = 0; trial < 5; ++trial) {
        const auto seq = random_sequence(6, 5, rng);
        const auto plain = forward(w3, seq);
        for (std::size_t layer = 0; layer < 3; ++layer) {
            Interventions iv;
            iv.knockout = KnockoutRule::text_to_image_and_eoi().resolve(seq.size(), seq.n_eoi, 3);
            iv.knockout.edges[0].layers = {layer};
            const auto ko = forward(w3, seq, iv);
            for (std::size_t l = 0; l <= layer; ++l)
                for (std::size_t i = 0; i < seq.size(); ++i) {
                    const auto x = ko.residual(l, i), y = plain.residual(l, i);
                    earlier_bitwise = earlier_bitwise && std::equal(x.begin(), x.end(), y.begin());
                }
        }
    }
    return {worst <= 1e-6 && earlier_bitwise, "max relative text-logit change under image scrambling " +
                                                  fmt("%.3g", worst) + "; earlier layers bitwise unchanged: " +
                                                  (earlier_bitwise ? "yes" : "no")};
}

Outcome patching_soundness() {
    using namespace transformer;
    std::mt19937_64 rng(801);
    const auto w = micro_weights(9);
    bool self_noop = true;
    for (int trial = 0; trial < 5; ++trial) {
        const auto seq = random_sequence(6, 5, rng);
        const auto plain = forward(w, seq);
        const auto reference = forward_logits(w, seq);
        for (std::size_t layer = 0; layer <= 2; ++layer)
            for (std::size_t pos = 0; pos < seq.size(); ++pos) {
                PatchSpec patch;
                const auto r = plain.residual(layer, pos);
                patch.entries.push_back({layer, pos, std::vector<double>(r.begin(), r.end())});
                self_noop = self_noop && forward_logits(w, seq, {}, patch) == reference;
            }
    }
    double worst = 1.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto base = random_sequence(6, 4, rng);
        const auto source = random_sequence(6, 3 + trial % 3, rng);
        const auto st = forward(w, source);
        const auto r = st.residual(2, source.size() - 1);
        Interventions iv;
        iv.patch.entries.push_back({2, base.size() - 1, std::vector<double>(r.begin(), r.end())});
        const auto bt = forward(w, base, iv);
        worst = std::min(worst, distribution_similarity(output_distribution(bt, base.size() - 1),
                                                        output_distribution(st, source.size() - 1)));
    }
    return {self_noop && worst >= 1.0 - 1e-6, std::string("self-patch bitwise no-op: ") + (self_noop ? "yes" : "no") +
                                                  "; min final-layer patch similarity " + fmt("%.10f", worst)};
}

// ---------------------------------------------------------------------------
// Training

Outcome gradients_match_finite_differences() {
    const auto ds = tasks::make_dataset(gatescope::testing::small_dataset_config());
    const auto w = transformer::Weights::initialize(gatescope::testing::micro_model(ds.vocab));
    std::vector<training::Example> batch;
    for (std::size_t i = 0; i < 4; ++i)
        batch.push_back(training::make_example(ds.train[i * 7], ds.vocab, tasks::LossRegime::Native, i == 1, 2));
    training::GradCheckOptions opt;
    opt.n_params = 512;
    opt.seed = 9;
    const auto r = training::grad_check(w, batch, opt);
    return {r.max_rel_error <= 1e-4, "max relative error " + fmt("%.3g", r.max_rel_error) + " over " +
                                         std::to_string(r.n_checked) + " parameters (worst in " + r.worst_tensor + ")"};
}

// ---------------------------------------------------------------------------
// End-to-end runs through the command-line tool

struct Workspace {
    fs::path root;
    Workspace() {
        std::random_device rd;
        root = fs::temp_directory_path() / ("gatescope_acceptance_" + std::to_string(rd()));
        fs::create_directories(root);
    }
    ~Workspace() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
};

Workspace& workspace() {
    static Workspace w;
    return w;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void run_cli(const std::string& args) {
    const fs::path log = workspace().root / "cli.log";
    const std::string cmd = std::string(GATESCOPE_CLI_PATH) + " " + args + " --threads 1 > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        std::string tail = slurp(log);
        if (tail.size() > 600) tail = tail.substr(tail.size() - 600);
        throw std::runtime_error("gatescope " + args + " failed:\n" + tail);
    }
}

/// Final-step value of (metric, knockout) on the test split.
double final_metric(const fs::path& run, const std::string& metric, const std::string& knockout) {
    const auto rows = training::read_metric_csv(run / "metrics.csv");
    std::optional<training::MetricRow> best;
    for (const auto& r : rows)
        if (r.split == "test" && r.metric == metric && r.knockout == knockout && (!best || r.step >= best->step)) best = r;
    if (!best) throw std::runtime_error("no " + metric + " [" + knockout + "] row in " + (run / "metrics.csv").string());
    return best->value;
}

constexpr std::size_t kBaselineSteps = 1000;

fs::path corpus_dir() { return workspace().root / "corpus"; }
fs::path baseline_dir() { return workspace().root / "baseline"; }

bool baseline_trained = false;

void ensure_baseline() {
    if (baseline_trained) return;
    run_cli("dataset --seed 7 --out " + corpus_dir().string());
    run_cli("train --corpus " + corpus_dir().string() + " --seed 7 --steps " + std::to_string(kBaselineSteps) +
            " --eval-every 250 --checkpoint-every " + std::to_string(kBaselineSteps) +
            " --eval-knockouts none,text-to-img+eoi,text-to-eoi --out " + baseline_dir().string());
    baseline_trained = true;
}

Outcome pinned_baseline() {
    ensure_baseline();
    const auto rows = training::read_metric_csv(baseline_dir() / "metrics.csv");
    long first_hit = -1;
    for (const auto& r : rows)
        if (first_hit < 0 && r.split == "test" && r.metric == "accuracy" && r.knockout == "none" && r.value >= 0.9)
            first_hit = static_cast<long>(r.step);
    const double acc = final_metric(baseline_dir(), "accuracy", "none");
    const double gated = final_metric(baseline_dir(), "accuracy", "text-to-img+eoi");
    const double chance = 1.0 / tasks::DatasetConfig{}.n_classes;
    return {acc >= 0.90 && gated <= chance + 0.10,
            "held-out accuracy " + fmt("%.4f", acc) + " after " + std::to_string(kBaselineSteps) +
                " steps (first >= 0.90 at step " + std::to_string(first_hit) + "); full knockout " +
                fmt("%.4f", gated) + " vs chance " + fmt("%.2f", chance)};
}

Outcome masked_finetune() {
    ensure_baseline();
    const double pre = final_metric(baseline_dir(), "accuracy", "none");
    const auto masked = workspace().root / "finetune_masked", plain = workspace().root / "finetune_plain";
    const std::string common = "finetune --corpus " + corpus_dir().string() + " --checkpoint " +
                               (baseline_dir() / "final.json").string() + " --seed 7";
    run_cli(common + " --mask-eoi --out " + masked.string());
    run_cli(common + " --out " + plain.string());
    const double m_un = final_metric(masked, "accuracy", "none"), m_ab = final_metric(masked, "accuracy", "text-to-eoi");
    const double p_un = final_metric(plain, "accuracy", "none"), p_ab = final_metric(plain, "accuracy", "text-to-eoi");
    const double masked_gap = std::abs(m_un - m_ab), plain_gap = std::abs(p_un - p_ab);
    const bool pass = masked_gap <= 0.05 && m_un >= 0.9 * pre && plain_gap > masked_gap;
    return {pass, "masked: unablated " + fmt("%.4f", m_un) + ", text-to-eoi " + fmt("%.4f", m_ab) + " (gap " +
                      fmt("%.4f", masked_gap) + ", retains " + fmt("%.3f", m_un / pre) + " of " + fmt("%.4f", pre) +
                      "); unmasked control: unablated " + fmt("%.4f", p_un) + ", text-to-eoi " + fmt("%.4f", p_ab) +
                      " (gap " + fmt("%.4f", plain_gap) + ", must exceed the masked gap)"};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

Outcome cli_determinism() {
    std::map<std::string, std::string> runs[2];
    for (int i = 0; i < 2; ++i) {
        const auto root = workspace().root / ("determinism" + std::to_string(i));
        const auto c = root / "corpus", t = root / "train", f = root / "finetune", a = root / "analyze";
        run_cli("dataset --classes 6 --per-class 20 --image-length 12 --max-seq-len 32 --seed 3 --out " + c.string());
        run_cli("train --corpus " + c.string() +
                " --layers 2 --d-model 32 --heads 4 --d-mlp 64 --max-seq-len 32 --steps 30 --batch-size 8"
                " --warmup 5 --log-every 5 --eval-every 10 --checkpoint-every 15 --out " + t.string());
        run_cli("finetune --corpus " + c.string() + " --checkpoint " + (t / "final.json").string() +
                " --steps 10 --eval-every 5 --checkpoint-every 10 --batch-size 8 --mask-eoi --out " + f.string());
        run_cli("analyze --all --corpus " + c.string() + " --checkpoint " + (t / "final.json").string() +
                " --per-class 8 --n-pairs 100 --max-points 60 --k-density 6 --min-size 5 --k 5 --steps 6"
                " --batch-size 8 --eval-every 3 --out " + a.string());
        runs[i] = tree(root);
    }
    std::size_t differing = 0;
    std::string first;
    for (const auto& [name, bytes] : runs[0]) {
        const auto it = runs[1].find(name);
        if (it == runs[1].end() || it->second != bytes) {
            if (differing++ == 0) first = name;
        }
    }
    if (runs[0].size() != runs[1].size()) ++differing;
    return {differing == 0 && !runs[0].empty(),
            std::to_string(runs[0].size()) + " output files from dataset/train/finetune/analyze compared, " +
                std::to_string(differing) + " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

/// Checks one run directory's narrow-gate report; returns an empty string when well formed.
std::string narrow_gate_problem(const fs::path& run, std::string& report) {
    for (const char* f : {"narrow_gate.jsonl", "narrow_gate.csv", "manifest.json"})
        if (!fs::exists(run / f)) return std::string("missing ") + f;
    const auto records = experiments::read_records_jsonl(run / "narrow_gate.jsonl");
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& r : records) {
        if (r.experiment != "narrow_gate" || r.group != "narrow_gate") return "unexpected experiment/group";
        if (r.checkpoint.empty() || r.config_hash.empty()) return "missing provenance";
        if (!std::isfinite(r.value)) return "non-finite value";
        seen.insert({r.key, r.metric});
    }
    for (const char* task : {"classification", "captioning"}) {
        for (const char* metric : {"baseline", "drop_text_to_eoi", "drop_text_to_img"})
            if (!seen.count({task, metric})) return std::string("missing ") + task + "/" + metric;
    }
    for (const auto& r : records)
        if (r.key == "classification" && r.metric != "baseline") report += r.metric + "=" + fmt("%.3f", r.value) + " ";
    if (records_to_csv(records) != slurp(run / "narrow_gate.csv")) return "csv and jsonl disagree";
    return "";
}

Outcome narrow_gate_reported() {
    ensure_baseline();
    std::vector<fs::path> runs = {baseline_dir()};
    for (const char* name : {"finetune_masked", "finetune_plain", "determinism0/train", "determinism0/finetune"})
        if (fs::exists(workspace().root / name)) runs.push_back(workspace().root / name);
    std::string detail;
    bool pass = true;
    for (const auto& run : runs) {
        std::string report;
        const auto problem = narrow_gate_problem(run, report);
        pass = pass && problem.empty();
        detail += run.filename().string() + ": " + (problem.empty() ? report : "BAD (" + problem + ")") + "; ";
    }
    return {pass, std::to_string(runs.size()) + " trained models; " + detail};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "exact kNN graph matches brute-force oracle", knn_matches_oracle},
        {2, "intrinsic dimension within 15% on uniform cubes", intrinsic_dimension_on_cubes},
        {3, "density-peak clustering on Gaussian blobs", adp_recovers_blobs},
        {4, "neighborhood overlap properties", neighborhood_overlap_properties},
        {5, "cross-modal attention profile", attention_profile_properties},
        {6, "output-distribution similarity", similarity_properties},
        {7, "attention knockout soundness", knockout_soundness},
        {8, "activation patching soundness", patching_soundness},
        {9, "analytic gradients vs finite differences", gradients_match_finite_differences},
        {10, "pinned desk-scale baseline", pinned_baseline},
        {11, "masked [EOI] fine-tuning", masked_finetune},
        {12, "byte-identical CLI reruns", cli_determinism},
        {13, "narrow-gate diagnostic emitted", narrow_gate_reported},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failed;
        std::printf("criterion %2d %s (%.1fs) %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", secs, c.name,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
