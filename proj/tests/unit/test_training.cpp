#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gatescope/common/error.hpp"
#include "gatescope/tasks.hpp"
#include "gatescope/training.hpp"
#include "test_support.hpp"

using namespace gatescope;
using namespace gatescope::training;
using gatescope::testing::micro_model;
using gatescope::testing::small_dataset_config;
using gatescope::testing::TempDir;
using transformer::KnockoutRule;
using transformer::Weights;

namespace {

const tasks::Dataset& micro_dataset() {
    static const tasks::Dataset ds = make_dataset(small_dataset_config());
    return ds;
}

/// Index of the first differing element, or -1; keeps failure output short.
template <typename T>
long first_difference(const std::vector<T>& a, const std::vector<T>& b) {
    if (a.size() != b.size()) return 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] == b[i])) return static_cast<long>(i);
    return -1;
}

Weights micro_weights() { return Weights::initialize(micro_model(micro_dataset().vocab)); }

TrainConfig quick_config(std::size_t steps = 12) {
    TrainConfig c;
    c.steps = steps;
    c.batch_size = 4;
    c.lr0 = 3e-3;
    c.warmup_steps = 2;
    c.log_every = 2;
    c.eval_every = 6;
    c.checkpoint_every = 6;
    c.seed = 5;
    return c;
}

std::vector<Example> micro_batch(bool eoi_mask = false) {
    const auto& ds = micro_dataset();
    std::vector<Example> batch;
    for (std::size_t i = 0; i < 3; ++i)
        batch.push_back(make_example(ds.train[i * 5], ds.vocab, tasks::LossRegime::Native, eoi_mask && i == 1, 2));
    return batch;
}

}  // namespace

TEST(Loss, UniformLogitsGiveLogV) {
    const std::size_t V = 7;
    const std::vector<double> logits(3 * V, 0.25);
    const std::vector<transformer::TokenId> targets = {1, 4, 6};
    const std::vector<unsigned char> mask = {1, 1, 1};
    EXPECT_NEAR(masked_cross_entropy(logits, V, targets, mask), std::log(7.0), 1e-12);
}

TEST(Loss, ConfidentLogitsGiveNearZero) {
    const std::size_t V = 5;
    std::vector<double> logits(2 * V, 0.0);
    logits[0 * V + 2] = 60.0;
    logits[1 * V + 0] = 60.0;
    const std::vector<transformer::TokenId> targets = {2, 0};
    const std::vector<unsigned char> mask = {1, 1};
    EXPECT_LT(masked_cross_entropy(logits, V, targets, mask), 1e-20);
}

TEST(Loss, MaskedMeanEqualsIndependentRecompute) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 2.0);
    const std::size_t V = 11, R = 10;
    std::vector<double> logits(R * V);
    for (auto& v : logits) v = g(rng);
    std::vector<transformer::TokenId> targets(R);
    for (auto& t : targets) t = static_cast<transformer::TokenId>(rng() % V);
    std::vector<unsigned char> mask(R);
    double expected = 0;
    for (std::size_t r = 0; r < R; ++r) {
        mask[r] = r % 2;
        if (!mask[r]) continue;
        double z = 0;
        for (std::size_t v = 0; v < V; ++v) z += std::exp(logits[r * V + v]);
        expected += (std::log(z) - logits[r * V + static_cast<std::size_t>(targets[r])]) / (R / 2);
    }
    EXPECT_NEAR(masked_cross_entropy(logits, V, targets, mask), expected, 1e-6);
    const std::vector<unsigned char> none(R, 0);
    EXPECT_THROW(masked_cross_entropy(logits, V, targets, none), ConfigError);
}

TEST(MakeExample, EoiMaskMatchesEvaluationKnockout) {
    const auto& ds = micro_dataset();
    const auto& doc = ds.train[0];
    const auto masked = make_example(doc, ds.vocab, tasks::LossRegime::Native, true, 2);
    const auto resolved = KnockoutRule::text_to_eoi().resolve(doc.tokens.size(), doc.tokens.n_eoi, 2);
    ASSERT_EQ(masked.knockout.edges.size(), 1u);
    EXPECT_EQ(masked.knockout.edges[0].layers, resolved.edges[0].layers);
    EXPECT_EQ(masked.knockout.edges[0].queries, resolved.edges[0].queries);
    EXPECT_EQ(masked.knockout.edges[0].keys, resolved.edges[0].keys);
    EXPECT_TRUE(make_example(doc, ds.vocab, tasks::LossRegime::Native, false, 2).knockout.empty());
    const auto text_only = make_example(doc, ds.vocab, tasks::LossRegime::TextOnly, false, 2);
    EXPECT_LT(target_count(std::span(&text_only, 1)), target_count(std::span(&masked, 1)));
}

TEST(GradCheck, MicroModelWithinTolerance) {
    const auto batch = micro_batch(true);
    GradCheckOptions opt;
    opt.n_params = 256;
    opt.seed = 3;
    const auto r = grad_check(micro_weights(), batch, opt);
    EXPECT_GE(r.n_checked, 200u);
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "] analytic " << r.worst_analytic
                                     << " numeric " << r.worst_numeric;
}

TEST(GradCheck, ZeroTargetBatchHasZeroGradient) {
    auto batch = micro_batch();
    for (auto& ex : batch) std::fill(ex.loss_mask.begin(), ex.loss_mask.end(), 0);
    const auto lg = loss_and_gradient(micro_weights(), batch);
    EXPECT_EQ(lg.loss, 0.0);
    EXPECT_EQ(lg.n_targets, 0u);
    for (double g : lg.gradient) ASSERT_EQ(g, 0.0);
}

TEST(GradCheck, GradientIsLinearInLossScale) {
    const auto batch = micro_batch();
    const auto w = micro_weights();
    const auto a = loss_and_gradient(w, batch, 1.0), b = loss_and_gradient(w, batch, 2.0);
    EXPECT_NEAR(b.loss, 2.0 * a.loss, 1e-10);
    for (std::size_t i = 0; i < a.gradient.size(); ++i) ASSERT_NEAR(b.gradient[i], 2.0 * a.gradient[i], 1e-10);
}

TEST(Schedule, WarmupThenCosineToFloor) {
    TrainConfig c;
    c.steps = 1000;
    c.warmup_steps = 100;
    c.lr0 = 3e-4;
    c.min_lr_ratio = 0.1;
    EXPECT_NEAR(learning_rate(c, 50), 1.5e-4, 1e-15);
    EXPECT_NEAR(learning_rate(c, 100), 3e-4, 1e-15);
    EXPECT_NEAR(learning_rate(c, 550), 3e-4 * (0.1 + 0.9 * 0.5), 1e-15);
    EXPECT_NEAR(learning_rate(c, 1000), 3e-5, 1e-15);
    for (std::size_t s = 101; s <= 1000; ++s) ASSERT_LE(learning_rate(c, s), learning_rate(c, s - 1));
}

TEST(TrainConfig, ValidationAndJson) {
    TrainConfig c;
    c.lr0 = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.eval_knockouts = {"text-to-nowhere"};
    EXPECT_THROW(c.validate(), ConfigError);
    c = quick_config();
    c.eoi_mask = true;
    nlohmann::json j = c;
    const auto back = j.get<TrainConfig>();
    EXPECT_EQ(back.trajectory_hash(), c.trajectory_hash());
    EXPECT_TRUE(back.eoi_mask);
    auto threaded = c;
    threaded.threads = 4;
    threaded.eval_every = 99;
    EXPECT_EQ(threaded.trajectory_hash(), c.trajectory_hash());
    threaded.eoi_mask = false;
    EXPECT_NE(threaded.trajectory_hash(), c.trajectory_hash());
}

TEST(Train, ZeroStepsReturnsInitialWeights) {
    const auto w = micro_weights();
    const auto r = train(w, micro_dataset(), quick_config(0));
    EXPECT_EQ(r.weights.values, w.values);
    EXPECT_EQ(r.step, 0u);
}

TEST(Train, DeterministicAndThreadIndependent) {
    const auto w = micro_weights();
    const auto a = train(w, micro_dataset(), quick_config());
    const auto b = train(w, micro_dataset(), quick_config());
    auto threaded = quick_config();
    threaded.threads = 3;
    const auto c = train(w, micro_dataset(), threaded);
    EXPECT_EQ(first_difference(a.weights.values, b.weights.values), -1);
    EXPECT_EQ(first_difference(a.weights.values, c.weights.values), -1);
    EXPECT_EQ(first_difference(a.metrics, c.metrics), -1);
    EXPECT_NE(a.weights.values, w.values);
}

TEST(Train, LossDecreases) {
    auto c = quick_config(60);
    c.eval_every = 60;
    const auto r = train(micro_weights(), micro_dataset(), c);
    double first = NAN, last = NAN;
    for (const auto& m : r.metrics)
        if (m.split == "test" && m.metric == "loss" && m.knockout == "none") {
            if (m.step == 0) first = m.value;
            if (m.step == 60) last = m.value;
        }
    EXPECT_LT(last, first);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
    TempDir full("train_full"), part("train_part");
    const auto w = micro_weights();
    const auto c = quick_config();
    TrainOptions o;
    o.out_dir = full.path();
    const auto reference = train(w, micro_dataset(), c, o);

    TrainOptions interrupted;
    interrupted.out_dir = part.path();
    interrupted.on_metric = [](const MetricRow& row) {
        if (row.step > 7) throw std::runtime_error("interrupt");
    };
    EXPECT_THROW(train(w, micro_dataset(), c, interrupted), std::runtime_error);
    ASSERT_TRUE(std::filesystem::exists(part.path() / "checkpoints" / "step_0000006.json"));

    TrainOptions resume;
    resume.out_dir = part.path();
    resume.resume = true;
    const auto resumed = train(w, micro_dataset(), c, resume);
    EXPECT_EQ(resumed.resumed_from, 6u);
    EXPECT_EQ(first_difference(resumed.weights.values, reference.weights.values), -1);
    EXPECT_EQ(first_difference(read_metric_csv(part.path() / "metrics.csv"), read_metric_csv(full.path() / "metrics.csv")), -1);

    auto changed = c;
    changed.lr0 = 1e-3;
    EXPECT_THROW(train(w, micro_dataset(), changed, resume), ConfigError);
}

TEST(Train, WritesCheckpointsOnCadence) {
    TempDir dir("train_cadence");
    TrainOptions o;
    o.out_dir = dir.path();
    train(micro_weights(), micro_dataset(), quick_config(), o);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "step_0000006.json"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "step_0000012.json"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "final.json"));
    const auto ck = transformer::load_checkpoint(dir.path() / "final.json");
    EXPECT_EQ(ck.step, 12u);
}

TEST(Train, DivergenceGuardThrows) {
    auto c = quick_config(30);
    c.lr0 = 1e35;
    c.warmup_steps = 0;
    c.grad_clip = 0;
    EXPECT_THROW(train(micro_weights(), micro_dataset(), c), NumericalError);
}

TEST(Evaluate, NoneKnockoutEqualsPlainAndThreadsAgree) {
    const auto& ds = micro_dataset();
    const auto w = micro_weights();
    const auto plain = evaluate(w, ds.test, ds.vocab, KnockoutRule{});
    EXPECT_EQ(evaluate(w, ds.test, ds.vocab, KnockoutRule::none()), plain);
    EXPECT_EQ(evaluate(w, ds.test, ds.vocab, KnockoutRule::none(), {tasks::LossRegime::Native, 3}), plain);
    EXPECT_GT(plain.n_classified, 0u);
    EXPECT_GT(plain.n_captions, 0u);
}

TEST(Evaluate, RandomModelIsNearChance) {
    auto cfg = small_dataset_config(20, 20, 8);
    cfg.max_seq_len = 24;
    const auto ds = make_dataset(cfg);
    const auto docs = classification_documents(ds, 10, 3);
    const auto w = Weights::initialize(micro_model(ds.vocab));
    const auto m = evaluate(w, docs, ds.vocab, KnockoutRule::none());
    EXPECT_EQ(m.n_classified, 200u);
    EXPECT_LE(m.accuracy, 0.05 + 0.10);
    EXPECT_NEAR(m.loss, std::log(static_cast<double>(ds.vocab.size())), 0.5);
}

TEST(Evaluate, PredictedClassTokenUsesClassNamesOnly) {
    const auto& v = micro_dataset().vocab;
    std::vector<float> row(v.size(), 0.0f);
    row[static_cast<std::size_t>(v.eos())] = 100.0f;
    row[static_cast<std::size_t>(v.class_name(2))] = 1.0f;
    EXPECT_EQ(predicted_class_token(row, v), v.class_name(2));
    row[static_cast<std::size_t>(v.class_name(1))] = 1.0f;
    EXPECT_EQ(predicted_class_token(row, v), v.class_name(1));
}

TEST(MetricCsv, RoundTrip) {
    TempDir dir("metrics");
    const std::vector<MetricRow> rows = {{0, "test", "accuracy", "none", 0.25},
                                         {10, "train", "loss", "text-to-eoi", 1.0 / 3.0}};
    write_metric_csv(dir.path() / "m.csv", rows);
    EXPECT_EQ(read_metric_csv(dir.path() / "m.csv"), rows);
}
