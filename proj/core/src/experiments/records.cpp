#include "gatescope/experiments/records.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "gatescope/common/error.hpp"
#include "gatescope/common/hash.hpp"
#include "gatescope/common/io.hpp"

namespace gatescope::experiments {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_real(double v) { return std::isnan(v) ? "" : io::format_real(v); }
std::string csv_index(long v) { return v == kNoIndex ? "" : std::to_string(v); }

json json_real(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

json json_index(long v) { return v == kNoIndex ? json(nullptr) : json(v); }

double real_from_json(const json& j) {
    if (j.is_null()) return kNaN;
    if (j.is_string()) return j.get<std::string>() == "inf" ? INFINITY : -INFINITY;
    return j.get<double>();
}

}  // namespace

RecordSink::RecordSink(std::string experiment, std::string checkpoint, std::string config_hash, std::uint64_t seed,
                       std::size_t n_layers)
    : n_layers_(n_layers) {
    base_.experiment = std::move(experiment);
    base_.checkpoint = std::move(checkpoint);
    base_.config_hash = std::move(config_hash);
    base_.seed = seed;
    base_.depth = kNaN;
    base_.ci_low = kNaN;
    base_.ci_high = kNaN;
}

ExperimentRecord& RecordSink::add(std::string metric, double value) {
    records_.push_back(base_);
    records_.back().metric = std::move(metric);
    records_.back().value = value;
    return records_.back();
}

ExperimentRecord& RecordSink::add_layer(std::size_t layer, std::string metric, double value) {
    auto& r = add(std::move(metric), value);
    r.layer = static_cast<long>(layer);
    r.depth = n_layers_ ? static_cast<double>(layer) / static_cast<double>(n_layers_) : 0.0;
    return r;
}

std::vector<ExperimentRecord> RecordSink::take() { return std::move(records_); }

void sort_records(std::vector<ExperimentRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const ExperimentRecord& a, const ExperimentRecord& b) {
        return std::tie(a.experiment, a.metric, a.group, a.key, a.step, a.layer) <
               std::tie(b.experiment, b.metric, b.group, b.key, b.step, b.layer);
    });
}

std::string records_to_csv(const std::vector<ExperimentRecord>& records) {
    std::string out = std::string(kRecordCsvHeader) + "\n";
    for (const auto& r : records) {
        out += r.experiment + "," + r.checkpoint + "," + r.config_hash + "," + std::to_string(r.seed) + "," +
               csv_index(r.layer) + "," + csv_real(r.depth) + "," + csv_index(r.step) + "," + r.group + "," +
               r.key + "," + r.metric + "," + csv_real(r.value) + "," + csv_real(r.ci_low) + "," +
               csv_real(r.ci_high) + "\n";
    }
    return out;
}

json record_to_json(const ExperimentRecord& r) {
    return json{{"experiment", r.experiment}, {"checkpoint", r.checkpoint}, {"config_hash", r.config_hash},
                {"seed", r.seed},             {"layer", json_index(r.layer)}, {"depth", json_real(r.depth)},
                {"step", json_index(r.step)}, {"group", r.group},           {"key", r.key},
                {"metric", r.metric},         {"value", json_real(r.value)}, {"ci_low", json_real(r.ci_low)},
                {"ci_high", json_real(r.ci_high)}};
}

std::string records_to_jsonl(const std::vector<ExperimentRecord>& records) {
    std::string out;
    for (const auto& r : records) out += record_to_json(r).dump() + "\n";
    return out;
}

std::vector<ExperimentRecord> read_records_jsonl(const std::filesystem::path& path) {
    std::istringstream in(io::read_text(path));
    std::vector<ExperimentRecord> out;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ExperimentRecord r;
        r.experiment = j.at("experiment");
        r.checkpoint = j.at("checkpoint");
        r.config_hash = j.at("config_hash");
        r.seed = j.at("seed");
        r.layer = j.at("layer").is_null() ? kNoIndex : j.at("layer").get<long>();
        r.depth = real_from_json(j.at("depth"));
        r.step = j.at("step").is_null() ? kNoIndex : j.at("step").get<long>();
        r.group = j.at("group");
        r.key = j.at("key");
        r.metric = j.at("metric");
        r.value = real_from_json(j.at("value"));
        r.ci_low = real_from_json(j.at("ci_low"));
        r.ci_high = real_from_json(j.at("ci_high"));
        out.push_back(std::move(r));
    }
    return out;
}

OutputEntry write_records(const std::filesystem::path& dir, const std::string& name,
                          std::vector<ExperimentRecord> records, const std::string& config_hash,
                          const std::string& checkpoint) {
    sort_records(records);
    io::ensure_directory(dir);
    const std::string csv = records_to_csv(records);
    const std::string jsonl = records_to_jsonl(records);
    io::write_text(dir / (name + ".csv"), csv);
    io::write_text(dir / (name + ".jsonl"), jsonl);
    return {name, name + ".csv", name + ".jsonl", records.size(), config_hash, checkpoint, hash_hex(csv + jsonl)};
}

void write_manifest(const std::filesystem::path& dir, std::vector<OutputEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const OutputEntry& a, const OutputEntry& b) { return a.experiment < b.experiment; });
    json outputs = json::array();
    for (const auto& e : entries)
        outputs.push_back({{"experiment", e.experiment},
                           {"csv", e.csv},
                           {"jsonl", e.jsonl},
                           {"records", e.records},
                           {"config_hash", e.config_hash},
                           {"checkpoint", e.checkpoint},
                           {"content_hash", e.content_hash}});
    io::write_json(dir / "manifest.json", json{{"format", "gatescope-records"}, {"version", 1}, {"outputs", outputs}});
}

}  // namespace gatescope::experiments
