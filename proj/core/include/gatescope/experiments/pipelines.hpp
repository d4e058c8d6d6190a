#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gatescope/experiments/records.hpp"
#include "gatescope/geometry/point_set.hpp"
#include "gatescope/tasks/corpus.hpp"
#include "gatescope/training/trainer.hpp"
#include "gatescope/transformer/analysis.hpp"
#include "gatescope/transformer/model.hpp"

namespace gatescope::experiments {

/// The model under analysis; `checkpoint` is the hash carried by every record.
struct Subject {
    const transformer::Weights& weights;
    std::string checkpoint;
    std::size_t threads = 1;
};

struct ExperimentOutput {
    std::vector<ExperimentRecord> records;
    std::string config_hash;
    std::vector<std::string> warnings;
};

/// Layers 0..n_layers when `layers` is empty; n_layers is the stream entering the final norm.
std::vector<std::size_t> resolve_layers(const std::vector<std::size_t>& layers, std::size_t n_layers);

struct ModalityGapConfig {
    std::vector<std::size_t> layers;
    std::size_t n_pairs = 2000;
    /// Per-modality cap on the token states pooled for clustering.
    std::size_t max_points = 500;
    std::size_t k_density = 20;
    double z = 1.65;
    std::size_t min_size = 20;
    std::uint64_t seed = 7;
};

/// Per layer: cosine_gap median with IQR bounds between image- and
/// text-token states, then ADP on the pooled (deduplicated) states and the
/// homogeneity of the clusters with respect to modality.
ExperimentOutput modality_gap_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                         const ModalityGapConfig& config);

struct AttentionProfileConfig {
    double threshold = 0.01;
};

struct ProfileSummary {
    std::size_t n_eoi = 0;
    /// Positions reported individually, ascending; always contains n_eoi.
    std::vector<std::size_t> individual;
    /// share[l][g]: g indexes `individual`, then one final "internal image" entry.
    std::vector<std::vector<double>> share;
    std::vector<bool> defined;
};

/// Averages per-document profiles (all with the same n_eoi) over documents
/// where the layer is defined, then groups positions by the layer-averaged share.
ProfileSummary summarize_attention_profiles(const std::vector<transformer::AttentionProfile>& profiles,
                                            double threshold);

ExperimentOutput attention_profile_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                              const AttentionProfileConfig& config);

struct ProbeConfig {
    std::vector<std::size_t> layers;
    std::size_t k = 30;
    /// Optional second reference: one row per document, same order.
    std::optional<geometry::PointSet> reference;
    std::uint64_t seed = 7;
};

/// Neighborhood overlap against class labels (and the optional reference)
/// for the [EOI], last-image and internal-image groups plus the position
/// that predicts the answer. Internal image averages per-position overlaps.
ExperimentOutput semantic_probe_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                           const ProbeConfig& config);

struct AblationConfig {
    std::vector<std::string> specs = {"none", "text-to-eoi", "text-to-img", "text-to-img+eoi"};
};

struct NarrowGate {
    std::string task;
    double baseline = 0.0;
    double drop_text_to_eoi = 0.0;
    double drop_text_to_img = 0.0;
};

/// Accuracy drops under text-to-eoi and text-to-img for each task.
std::vector<NarrowGate> narrow_gate_diagnostic(const Subject& subject, const std::vector<tasks::Document>& docs,
                                               const tasks::Vocabulary& vocab);

/// The narrow-gate pair alone, as records of experiment "narrow_gate".
ExperimentOutput narrow_gate_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                        const tasks::Vocabulary& vocab);

/// One row per (spec, task) plus the narrow-gate pair, which is always emitted.
ExperimentOutput ablation_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                     const tasks::Vocabulary& vocab, const AblationConfig& config);

struct PatchingConfig {
    std::vector<std::size_t> layers;
};

/// For each class pair (base, target) and each layer l*, the [EOI]
/// block-input state of the i-th target-class prompt replaces that of the
/// i-th base-class prompt. Reports the mean similarity to the target's
/// output distribution and the fraction where p(target name) > p(base name).
ExperimentOutput patching_experiment(const Subject& subject, const std::vector<tasks::Document>& docs,
                                     const tasks::Vocabulary& vocab, const std::vector<tasks::ClassPair>& pairs,
                                     const PatchingConfig& config);

struct FinetuneDynamicsConfig {
    training::TrainConfig train;
};

/// Fine-tunes twice from the same weights, with and without the training-time
/// [EOI] mask, and records test metrics with and without text-to-eoi ablation.
ExperimentOutput finetune_experiment(const Subject& subject, const tasks::Dataset& dataset,
                                     const FinetuneDynamicsConfig& config);

void to_json(nlohmann::json& j, const ModalityGapConfig& c);
void from_json(const nlohmann::json& j, ModalityGapConfig& c);
void to_json(nlohmann::json& j, const AttentionProfileConfig& c);
void from_json(const nlohmann::json& j, AttentionProfileConfig& c);
void to_json(nlohmann::json& j, const ProbeConfig& c);
void from_json(const nlohmann::json& j, ProbeConfig& c);
void to_json(nlohmann::json& j, const AblationConfig& c);
void from_json(const nlohmann::json& j, AblationConfig& c);
void to_json(nlohmann::json& j, const PatchingConfig& c);
void from_json(const nlohmann::json& j, PatchingConfig& c);

}  // namespace gatescope::experiments
