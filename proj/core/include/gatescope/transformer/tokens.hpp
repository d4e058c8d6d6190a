#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gatescope::transformer {

using TokenId = std::int32_t;

enum class Modality : std::uint8_t { Image, Text, Special };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Token ids with per-token modality tags and the position of the
/// end-of-image token. Every image token precedes n_eoi.
struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<Modality> modality;
    std::size_t n_eoi = 0;

    std::size_t size() const { return ids.size(); }
    /// Throws ConfigError when tags are misaligned, n_eoi is out of range,
    /// an image token follows n_eoi or the sequence exceeds max_len.
    void validate(std::size_t max_len) const;
    /// Copy of the first `length` tokens.
    TokenSequence prefix(std::size_t length) const;

    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

}  // namespace gatescope::transformer
