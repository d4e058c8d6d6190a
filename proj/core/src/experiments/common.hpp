#pragma once

// Helpers shared by the experiment pipelines.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gatescope/common/hash.hpp"
#include "gatescope/experiments/pipelines.hpp"
#include "gatescope/tasks/corpus.hpp"

namespace gatescope::experiments::detail {

inline std::string corpus_fingerprint(const std::vector<tasks::Document>& docs) {
    Fnv1a h;
    for (const auto& d : docs) h.update(tasks::document_to_json(d).dump());
    return h.hex();
}

inline std::string config_hash(const nlohmann::json& config, const std::string& corpus) {
    return hash_hex(nlohmann::json{{"config", config}, {"corpus", corpus}}.dump());
}

inline transformer::Interventions residual_only() {
    transformer::Interventions iv;
    iv.capture = {true, false};
    return iv;
}

}  // namespace gatescope::experiments::detail
