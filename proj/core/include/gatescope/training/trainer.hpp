#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gatescope/tasks/corpus.hpp"
#include "gatescope/transformer/checkpoint.hpp"
#include "gatescope/transformer/model.hpp"

namespace gatescope::training {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    /// Decoupled decay, applied to weight matrices only.
    double weight_decay = 0.1;
};

struct TrainConfig {
    tasks::LossRegime regime = tasks::LossRegime::Native;
    std::size_t batch_size = 16;
    std::size_t steps = 3000;
    double lr0 = 3e-4;
    /// Linear ramp to lr0, then cosine decay to lr0 * min_lr_ratio at the last step.
    std::size_t warmup_steps = 100;
    double min_lr_ratio = 0.1;
    AdamConfig adam;
    /// Global gradient-norm clip; 0 disables.
    double grad_clip = 1.0;
    /// Blocks text-position queries from the [EOI] key in every layer during training.
    bool eoi_mask = false;
    std::uint64_t seed = 7;
    std::size_t log_every = 50;
    std::size_t eval_every = 500;
    std::size_t checkpoint_every = 1000;
    std::vector<std::string> eval_knockouts = {"none"};
    std::size_t threads = 1;

    void validate() const;
    /// Hash of the fields that change the trajectory (excludes threads and cadences).
    std::string trajectory_hash() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

double learning_rate(const TrainConfig& config, std::size_t step);

struct MetricRow {
    std::size_t step = 0;
    std::string split;
    std::string metric;
    std::string knockout;
    double value = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

inline constexpr const char* kMetricCsvHeader = "step,split,metric,knockout,value";
void write_metric_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metric_csv(const std::filesystem::path& path);

struct TrainOptions {
    /// Empty: nothing is written. Otherwise metrics.csv, checkpoints/step_NNNNNNN.json and final.json.
    std::filesystem::path out_dir;
    /// Continue from the newest checkpoint under out_dir; the trajectory hash must match.
    bool resume = false;
    std::function<void(const MetricRow&)> on_metric;
};

struct TrainResult {
    transformer::Weights weights;
    transformer::OptimizerState optimizer;
    std::size_t step = 0;
    std::size_t resumed_from = 0;
    std::vector<MetricRow> metrics;
};

/// Deterministic for a given (initial weights, dataset, config): batch b of
/// step s is drawn from a seed derived from (seed, s), and per-example
/// gradients are reduced in batch order regardless of the thread count.
/// Throws NumericalError if the loss or gradient becomes non-finite.
TrainResult train(const transformer::Weights& initial, const tasks::Dataset& dataset, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace gatescope::training
