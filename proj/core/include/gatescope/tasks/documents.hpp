#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gatescope/tasks/vocabulary.hpp"

namespace gatescope::tasks {

inline constexpr std::size_t kDefaultImageLength = 36;

/// Per-class base pattern of image codes.
struct ClassSpec {
    std::size_t class_id = 0;
    std::vector<TokenId> base_pattern;
    TokenId name_token = 0;
};

/// Base patterns are drawn by rejection sampling so every pair differs in at
/// least image_length/2 positions.
std::vector<ClassSpec> make_class_specs(const Vocabulary& vocab, std::size_t image_length, std::uint64_t seed);

std::size_t hamming_distance(const std::vector<TokenId>& a, const std::vector<TokenId>& b);

/// Each position keeps the base code with probability 1 - noise_eps, otherwise
/// takes a uniformly random code (possibly the base code again).
std::vector<TokenId> render_image(const ClassSpec& cls, const Vocabulary& vocab, double noise_eps, std::uint64_t seed);

enum class Layout { ClassificationPrompt, ImageFirstCaption, CaptionFirstImage };
enum class LossRegime { Native, TextOnly };

std::string_view to_string(Layout l);
Layout layout_from_string(std::string_view s);
std::string_view to_string(LossRegime r);
LossRegime loss_regime_from_string(std::string_view s);

struct Document {
    TokenSequence tokens;
    Layout layout = Layout::ClassificationPrompt;
    std::size_t class_id = 0;
    /// loss_mask[t]: token t is a next-token target (never true at t = 0).
    std::vector<unsigned char> loss_mask;
    /// Index of the class-name token following "this object is a", if the layout has one after the image.
    std::optional<std::size_t> answer_position;

    /// The tokens up to (excluding) the answer; its last position predicts the answer.
    TokenSequence prompt() const;
};

/// Native: every non-[PAD] token after position 0. Text-only: text-modality tokens only.
std::vector<unsigned char> loss_mask_for(const TokenSequence& tokens, const Vocabulary& vocab, LossRegime regime);

struct RenderOptions {
    double noise_eps = 0.1;
    std::size_t max_seq_len = 64;
};

/// classification_prompt / image_first_caption: [BOS][BOI] img [EOI] this object is a <name> [EOS]
/// caption_first_image:                      [BOS] this object is a <name> [BOI] img [EOI] [EOS]
Document build_document(const ClassSpec& cls, Layout layout, LossRegime regime, const Vocabulary& vocab,
                        std::uint64_t seed, RenderOptions options = {});

}  // namespace gatescope::tasks
