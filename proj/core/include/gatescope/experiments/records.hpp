#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gatescope::experiments {

inline constexpr long kNoIndex = -1;

/// One plot-ready number. `group` names the token group, knockout or curve;
/// `key` carries any further coordinate (task, class pair). Absent numeric
/// coordinates are kNoIndex, absent CI bounds NaN.
struct ExperimentRecord {
    std::string experiment;
    std::string checkpoint;
    std::string config_hash;
    std::uint64_t seed = 0;
    long layer = kNoIndex;
    /// layer / n_layers, NaN when the record is not per layer.
    double depth = 0.0;
    long step = kNoIndex;
    std::string group;
    std::string key;
    std::string metric;
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

/// Fills the provenance fields once so experiment code only sets coordinates.
class RecordSink {
public:
    RecordSink(std::string experiment, std::string checkpoint, std::string config_hash, std::uint64_t seed,
               std::size_t n_layers);

    ExperimentRecord& add(std::string metric, double value);
    ExperimentRecord& add_layer(std::size_t layer, std::string metric, double value);

    std::vector<ExperimentRecord> take();

private:
    ExperimentRecord base_;
    std::size_t n_layers_;
    std::vector<ExperimentRecord> records_;
};

/// Stable order: experiment, metric, group, key, step, layer.
void sort_records(std::vector<ExperimentRecord>& records);

inline constexpr const char* kRecordCsvHeader =
    "experiment,checkpoint,config_hash,seed,layer,depth,step,group,key,metric,value,ci_low,ci_high";

std::string records_to_csv(const std::vector<ExperimentRecord>& records);
std::string records_to_jsonl(const std::vector<ExperimentRecord>& records);
nlohmann::json record_to_json(const ExperimentRecord& r);
std::vector<ExperimentRecord> read_records_jsonl(const std::filesystem::path& path);

struct OutputEntry {
    std::string experiment;
    std::string csv;
    std::string jsonl;
    std::size_t records = 0;
    std::string config_hash;
    std::string checkpoint;
    std::string content_hash;
};

/// Sorts, writes <dir>/<name>.csv and <name>.jsonl and returns the manifest entry.
OutputEntry write_records(const std::filesystem::path& dir, const std::string& name,
                          std::vector<ExperimentRecord> records, const std::string& config_hash,
                          const std::string& checkpoint);

/// manifest.json listing every output with its config hash; entries sorted by experiment.
void write_manifest(const std::filesystem::path& dir, std::vector<OutputEntry> entries);

}  // namespace gatescope::experiments
