#include "gatescope/tasks/vocabulary.hpp"

#include <algorithm>

#include "gatescope/common/error.hpp"

namespace gatescope::tasks {

namespace {
constexpr std::array<std::string_view, 5> kSpecialNames = {"[PAD]", "[BOS]", "[BOI]", "[EOI]", "[EOS]"};
}

Vocabulary::Vocabulary(std::size_t n_image_codes, std::size_t n_classes)
    : n_image_codes_(n_image_codes), n_classes_(n_classes) {
    require(n_image_codes >= 2, "vocabulary needs at least 2 image codes");
    require(n_classes >= 1, "vocabulary needs at least one class");
    require(n_text_words() <= kMaxTextWords,
            "too many classes: text vocabulary is limited to " + std::to_string(kMaxTextWords) + " words");
}

TokenId Vocabulary::image_code(std::size_t code) const {
    require(code < n_image_codes_, "image code out of range");
    return static_cast<TokenId>(kSpecials + code);
}

TokenId Vocabulary::word(std::string_view w) const {
    auto it = std::find(kTemplateWords.begin(), kTemplateWords.end(), w);
    require(it != kTemplateWords.end(), "unknown template word: " + std::string(w));
    return static_cast<TokenId>(kSpecials + n_image_codes_ + static_cast<std::size_t>(it - kTemplateWords.begin()));
}

TokenId Vocabulary::class_name(std::size_t cls) const {
    require(cls < n_classes_, "class id out of range");
    return static_cast<TokenId>(kSpecials + n_image_codes_ + kTemplateWords.size() + cls);
}

bool Vocabulary::is_image(TokenId id) const {
    return id >= static_cast<TokenId>(kSpecials) && id < static_cast<TokenId>(kSpecials + n_image_codes_);
}

bool Vocabulary::is_class_name(TokenId id) const {
    const auto first = static_cast<TokenId>(kSpecials + n_image_codes_ + kTemplateWords.size());
    return id >= first && id < static_cast<TokenId>(size());
}

Modality Vocabulary::modality(TokenId id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < size(), "token id out of range: " + std::to_string(id));
    if (static_cast<std::size_t>(id) < kSpecials) return Modality::Special;
    return is_image(id) ? Modality::Image : Modality::Text;
}

std::string Vocabulary::token_string(TokenId id) const {
    switch (modality(id)) {
        case Modality::Special: return std::string(kSpecialNames[static_cast<std::size_t>(id)]);
        case Modality::Image: return "img" + std::to_string(id - static_cast<TokenId>(kSpecials));
        case Modality::Text: break;
    }
    const auto w = static_cast<std::size_t>(id) - kSpecials - n_image_codes_;
    if (w < kTemplateWords.size()) return std::string(kTemplateWords[w]);
    return "class" + std::to_string(w - kTemplateWords.size());
}

std::vector<transformer::EmbeddingGroup> Vocabulary::modality_groups() const {
    const auto img0 = static_cast<TokenId>(kSpecials);
    const auto txt0 = static_cast<TokenId>(kSpecials + n_image_codes_);
    return {{img0, txt0}, {txt0, static_cast<TokenId>(size())}};
}

void Vocabulary::validate(const TokenSequence& seq, std::size_t max_len) const {
    seq.validate(max_len);
    std::size_t n_eoi_tokens = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        require(modality(seq.ids[i]) == seq.modality[i], "modality tag mismatch at position " + std::to_string(i));
        if (seq.ids[i] == eoi()) {
            ++n_eoi_tokens;
            require(i == seq.n_eoi, "[EOI] found away from n_eoi");
        }
    }
    require(n_eoi_tokens == 1, "sequence must contain exactly one [EOI]");
    std::size_t start = seq.n_eoi;
    while (start > 0 && is_image(seq.ids[start - 1])) --start;
    require(start < seq.n_eoi, "image span before [EOI] is empty");
    require(start > 0 && seq.ids[start - 1] == boi(), "[BOI] must immediately precede the image span");
    for (std::size_t i = 0; i < start; ++i)
        require(!is_image(seq.ids[i]), "image tokens must form one contiguous span");
}

}  // namespace gatescope::tasks
