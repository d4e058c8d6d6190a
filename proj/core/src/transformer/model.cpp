#include "gatescope/transformer/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include <nlohmann/json.hpp>

#include "gatescope/common/error.hpp"
#include "gatescope/common/hash.hpp"
#include "gatescope/common/rng.hpp"

namespace gatescope::transformer {

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::Image: return "image";
        case Modality::Text: return "text";
        case Modality::Special: return "special";
    }
    return "special";
}

Modality modality_from_string(std::string_view s) {
    if (s == "image") return Modality::Image;
    if (s == "text") return Modality::Text;
    if (s == "special") return Modality::Special;
    throw ConfigError("unknown modality tag '" + std::string(s) + "'");
}

void TokenSequence::validate(std::size_t max_len) const {
    require(!ids.empty(), "token sequence is empty");
    require(modality.size() == ids.size(), "modality tags are not aligned with token ids");
    require(ids.size() <= max_len, "sequence length " + std::to_string(ids.size()) + " exceeds max_seq_len " +
                                       std::to_string(max_len));
    require(n_eoi < ids.size(), "n_eoi is outside the sequence");
    for (std::size_t i = n_eoi; i < ids.size(); ++i) {
        require(modality[i] != Modality::Image, "image token found at or after the [EOI] position");
    }
}

TokenSequence TokenSequence::prefix(std::size_t length) const {
    require(length <= ids.size(), "prefix longer than the sequence");
    TokenSequence out;
    out.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(length));
    out.modality.assign(modality.begin(), modality.begin() + static_cast<std::ptrdiff_t>(length));
    out.n_eoi = n_eoi;
    return out;
}

void ModelConfig::validate() const {
    require(n_layers >= 1, "n_layers must be >= 1");
    require(n_heads >= 1 && d_model >= 1 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(d_mlp >= 1, "d_mlp must be >= 1");
    require(vocab_size >= 1, "vocab_size must be >= 1");
    require(max_seq_len >= 1, "max_seq_len must be >= 1");
    require(init_std > 0.0, "init_std must be positive");
    require(group_offset_std >= 0.0, "group_offset_std must be nonnegative");
    for (const auto& g : embedding_groups) {
        require(g.first >= 0 && g.first < g.last && static_cast<std::size_t>(g.last) <= vocab_size,
                "embedding group outside the vocabulary");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : c.embedding_groups) groups.push_back({g.first, g.last});
    j = nlohmann::json{{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                       {"d_model", c.d_model},       {"d_mlp", c.d_mlp},
                       {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
                       {"seed", c.seed},             {"init_std", c.init_std},
                       {"group_offset_std", c.group_offset_std}, {"embedding_groups", groups}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.n_layers = j.value("n_layers", d.n_layers);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.d_model = j.value("d_model", d.d_model);
    c.d_mlp = j.value("d_mlp", d.d_mlp);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
    c.seed = j.value("seed", d.seed);
    c.init_std = j.value("init_std", d.init_std);
    c.group_offset_std = j.value("group_offset_std", d.group_offset_std);
    c.embedding_groups.clear();
    if (j.contains("embedding_groups")) {
        for (const auto& g : j.at("embedding_groups")) {
            c.embedding_groups.push_back({g.at(0).get<TokenId>(), g.at(1).get<TokenId>()});
        }
    }
}

ParameterLayout::ParameterLayout(const ModelConfig& c) {
    c.validate();
    const std::size_t D = c.d_model;
    const std::size_t M = c.d_mlp;
    add("tok_emb", {c.vocab_size, D}, false);
    add("pos_emb", {c.max_seq_len, D}, false);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        add(p + "ln1.gain", {D}, false);
        add(p + "ln1.bias", {D}, false);
        add(p + "attn.w_q", {D, D}, true);
        add(p + "attn.b_q", {D}, false);
        add(p + "attn.w_k", {D, D}, true);
        add(p + "attn.b_k", {D}, false);
        add(p + "attn.w_v", {D, D}, true);
        add(p + "attn.b_v", {D}, false);
        add(p + "attn.w_o", {D, D}, true);
        add(p + "attn.b_o", {D}, false);
        add(p + "ln2.gain", {D}, false);
        add(p + "ln2.bias", {D}, false);
        add(p + "mlp.w_fc", {D, M}, true);
        add(p + "mlp.b_fc", {M}, false);
        add(p + "mlp.w_proj", {M, D}, true);
        add(p + "mlp.b_proj", {D}, false);
    }
    add("ln_f.gain", {D}, false);
    add("ln_f.bias", {D}, false);
    add("unembed", {D, c.vocab_size}, true);
}

void ParameterLayout::add(std::string name, std::vector<std::size_t> shape, bool decayed) {
    std::size_t size = 1;
    for (auto s : shape) size *= s;
    tensors_.push_back(TensorInfo{std::move(name), std::move(shape), total_, size, decayed});
    total_ += size;
}

const TensorInfo& ParameterLayout::find(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return t;
    }
    throw ConfigError("unknown parameter tensor '" + name + "'");
}

Weights Weights::initialize(const ModelConfig& config) {
    const ParameterLayout layout(config);
    Weights w;
    w.config = config;
    w.values.assign(layout.total(), 0.0f);
    const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
    for (std::size_t t = 0; t < layout.tensors().size(); ++t) {
        const auto& info = layout.tensors()[t];
        Rng rng(derive_seed(config.seed, t));
        std::normal_distribution<double> normal(0.0, config.init_std);
        float* dst = w.values.data() + info.offset;
        const bool is_gain = info.name.ends_with(".gain");
        const bool is_vector = info.shape.size() == 1;
        if (is_gain) {
            std::fill(dst, dst + info.size, 1.0f);
        } else if (!is_vector) {
            const bool scaled = info.name.ends_with("w_o") || info.name.ends_with("w_proj");
            const double scale = scaled ? residual_scale : 1.0;
            for (std::size_t i = 0; i < info.size; ++i) dst[i] = static_cast<float>(scale * normal(rng));
        }
    }
    if (!config.embedding_groups.empty() && config.group_offset_std > 0.0) {
        const auto& emb = layout.find("tok_emb");
        for (std::size_t g = 0; g < config.embedding_groups.size(); ++g) {
            Rng rng(derive_seed(config.seed, 1000003, g));
            std::normal_distribution<double> normal(0.0, config.group_offset_std);
            std::vector<double> offset(config.d_model);
            for (auto& v : offset) v = normal(rng);
            const auto& group = config.embedding_groups[g];
            for (TokenId id = group.first; id < group.last; ++id) {
                float* row = w.values.data() + emb.offset + static_cast<std::size_t>(id) * config.d_model;
                for (std::size_t k = 0; k < config.d_model; ++k) row[k] += static_cast<float>(offset[k]);
            }
        }
    }
    return w;
}

std::span<const float> Weights::tensor(const std::string& name) const {
    const TensorInfo info = ParameterLayout(config).find(name);
    return {values.data() + info.offset, info.size};
}

std::span<float> Weights::tensor(const std::string& name) {
    const TensorInfo info = ParameterLayout(config).find(name);
    return {values.data() + info.offset, info.size};
}

std::string Weights::fingerprint() const {
    Fnv1a h;
    h.update(nlohmann::json(config).dump());
    h.update(std::as_bytes(std::span(values)));
    return h.hex();
}

}  // namespace gatescope::transformer
