#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gatescope::transformer {

/// Blocks every (query, key) pair drawn from `queries` × `keys` in each listed layer, all heads.
struct KnockoutEdge {
    std::vector<std::size_t> layers;
    std::vector<std::size_t> queries;
    std::vector<std::size_t> keys;
};

/// Attention knockout, realized as -inf on the masked attention logits
/// before the softmax so surviving weights renormalize.
struct KnockoutSpec {
    std::vector<KnockoutEdge> edges;

    bool empty() const { return edges.empty(); }
    /// Out-of-range layers/positions, or a query left with no admissible key, throw ConfigError.
    void validate(std::size_t n_layers, std::size_t seq_len) const;
    /// Row-major seq_len × seq_len flags per layer; an empty inner vector means no knockout there.
    std::vector<std::vector<unsigned char>> layer_masks(std::size_t n_layers, std::size_t seq_len) const;
};

/// Overwrites the block-input residual x_p^l before block l runs.
/// layer == n_layers addresses the stream entering the final norm.
struct PatchEntry {
    std::size_t layer = 0;
    std::size_t position = 0;
    std::vector<double> vector;
};

struct PatchSpec {
    std::vector<PatchEntry> entries;

    bool empty() const { return entries.empty(); }
    void validate(std::size_t n_layers, std::size_t seq_len, std::size_t d_model) const;
};

/// Named knockouts resolved against a sequence's [EOI] position.
/// "Text" queries are the positions after [EOI]; the image span is
/// positions 1..n_eoi-1 ([BOI] and the image codes).
struct KnockoutRule {
    enum class Kind { None, TextToEoi, TextToImage, TextToImageAndEoi, TextToToken };

    Kind kind = Kind::None;
    std::size_t position = 0;

    static KnockoutRule none() { return {}; }
    static KnockoutRule text_to_eoi() { return {Kind::TextToEoi, 0}; }
    static KnockoutRule text_to_image() { return {Kind::TextToImage, 0}; }
    static KnockoutRule text_to_image_and_eoi() { return {Kind::TextToImageAndEoi, 0}; }
    static KnockoutRule text_to_token(std::size_t p) { return {Kind::TextToToken, p}; }

    /// Accepts: none, text-to-eoi, text-to-img, text-to-img+eoi, text-to-token:P.
    static KnockoutRule parse(const std::string& name);
    static std::vector<std::string> valid_names();
    std::string name() const;

    KnockoutSpec resolve(std::size_t seq_len, std::size_t n_eoi, std::size_t n_layers) const;

    friend bool operator==(const KnockoutRule&, const KnockoutRule&) = default;
};

}  // namespace gatescope::transformer
