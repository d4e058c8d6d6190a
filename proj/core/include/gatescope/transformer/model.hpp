#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gatescope/transformer/tokens.hpp"

namespace gatescope::transformer {

/// Token-id range [first, last) whose embedding rows share a random offset
/// at initialization; used to start modalities in separate regions.
struct EmbeddingGroup {
    TokenId first = 0;
    TokenId last = 0;

    friend bool operator==(const EmbeddingGroup&, const EmbeddingGroup&) = default;
};

struct ModelConfig {
    std::size_t n_layers = 6;
    std::size_t n_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_mlp = 512;
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 64;
    std::uint64_t seed = 7;
    double init_std = 0.02;
    double group_offset_std = 0.05;
    std::vector<EmbeddingGroup> embedding_groups;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    /// Matrices receive weight decay; gains, biases and embeddings do not.
    bool decayed = false;
};

/// Flat parameter layout. Linear maps are stored input-major (y = x W + b).
class ParameterLayout {
public:
    explicit ParameterLayout(const ModelConfig& config);

    const std::vector<TensorInfo>& tensors() const { return tensors_; }
    std::size_t total() const { return total_; }
    const TensorInfo& find(const std::string& name) const;

private:
    void add(std::string name, std::vector<std::size_t> shape, bool decayed);

    std::vector<TensorInfo> tensors_;
    std::size_t total_ = 0;
};

/// Model parameters as one contiguous float32 buffer in layout order.
struct Weights {
    ModelConfig config;
    std::vector<float> values;

    /// Deterministic initialization from config.seed.
    static Weights initialize(const ModelConfig& config);

    std::span<const float> tensor(const std::string& name) const;
    std::span<float> tensor(const std::string& name);
    /// Fingerprint of config and parameter bytes.
    std::string fingerprint() const;
};

}  // namespace gatescope::transformer
