#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gatescope/tasks/documents.hpp"

namespace gatescope::tasks {

struct RegimeMix {
    double classification = 0.4;
    double image_first = 0.3;
    double caption_first = 0.3;
};

struct DatasetConfig {
    std::size_t n_classes = 20;
    std::size_t n_per_class = 100;
    std::size_t n_image_codes = 64;
    std::size_t image_length = kDefaultImageLength;
    double noise_eps = 0.1;
    std::size_t max_seq_len = 64;
    RegimeMix mix;
    double train_fraction = 0.8;
    double test_fraction = 0.2;
    LossRegime loss_regime = LossRegime::Native;
    std::uint64_t seed = 7;

    void validate() const;
    std::string hash() const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

using ClassPair = std::pair<std::size_t, std::size_t>;

struct Dataset {
    DatasetConfig config;
    Vocabulary vocab;
    std::vector<ClassSpec> classes;
    std::vector<Document> train;
    std::vector<Document> test;
    /// Disjoint class pairs for patching experiments.
    std::vector<ClassPair> class_pairs;
};

/// Deterministic per seed and stratified by class; every document draws from
/// its own derived seed (seed, class, sample), so generation is order-independent.
Dataset make_dataset(const DatasetConfig& config);

std::vector<ClassPair> make_class_pairs(std::size_t n_classes, std::uint64_t seed);

/// Fresh classification prompts, `per_class` per class, independent of the splits.
std::vector<Document> classification_documents(const Dataset& dataset, std::size_t per_class, std::uint64_t seed);

nlohmann::json document_to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);

/// Writes train.jsonl, test.jsonl and manifest.json (config, config hash,
/// class patterns, class pairs, per-file record counts and hashes).
void save_corpus(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_corpus(const std::filesystem::path& dir);

}  // namespace gatescope::tasks
