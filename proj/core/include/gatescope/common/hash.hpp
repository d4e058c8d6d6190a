#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gatescope {

/// 64-bit FNV-1a. Stable across platforms, used for config and file fingerprints.
class Fnv1a {
public:
    void update(std::span<const std::byte> bytes);
    void update(std::string_view text);
    std::uint64_t digest() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_hex(std::string_view text);
std::string hash_file(const std::string& path);

}  // namespace gatescope
