#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gatescope/transformer/model.hpp"
#include "gatescope/transformer/tokens.hpp"

namespace gatescope::tasks {

using transformer::Modality;
using transformer::TokenId;
using transformer::TokenSequence;

inline constexpr std::array<std::string_view, 4> kTemplateWords = {"this", "object", "is", "a"};
inline constexpr std::size_t kMaxTextWords = 48;

/// Id layout: specials [PAD, BOS, BOI, EOI, EOS] = 0..4, then the image
/// codes, then the template words, then one name token per class.
class Vocabulary {
public:
    Vocabulary(std::size_t n_image_codes = 64, std::size_t n_classes = 20);

    TokenId pad() const { return 0; }
    TokenId bos() const { return 1; }
    TokenId boi() const { return 2; }
    TokenId eoi() const { return 3; }
    TokenId eos() const { return 4; }

    TokenId image_code(std::size_t code) const;
    TokenId word(std::string_view w) const;
    TokenId class_name(std::size_t cls) const;

    std::size_t n_image_codes() const { return n_image_codes_; }
    std::size_t n_classes() const { return n_classes_; }
    std::size_t n_text_words() const { return kTemplateWords.size() + n_classes_; }
    std::size_t size() const { return kSpecials + n_image_codes_ + n_text_words(); }

    bool is_image(TokenId id) const;
    bool is_class_name(TokenId id) const;
    Modality modality(TokenId id) const;
    std::string token_string(TokenId id) const;

    /// Image-code and text-word id ranges, for modality-separated initialization.
    std::vector<transformer::EmbeddingGroup> modality_groups() const;

    /// Exactly one [EOI] at n_eoi, [BOI] right before a nonempty contiguous image
    /// span that ends at n_eoi, modality tags matching the id ranges.
    void validate(const TokenSequence& seq, std::size_t max_len) const;

private:
    static constexpr std::size_t kSpecials = 5;
    std::size_t n_image_codes_;
    std::size_t n_classes_;
};

}  // namespace gatescope::tasks
