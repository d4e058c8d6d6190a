#include "gatescope/common/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "gatescope/common/error.hpp"

namespace gatescope {

namespace {
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
}

void Fnv1a::update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
        state_ ^= static_cast<std::uint64_t>(b);
        state_ *= kFnvPrime;
    }
}

void Fnv1a::update(std::string_view text) {
    update(std::as_bytes(std::span(text.data(), text.size())));
}

std::string Fnv1a::hex() const {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(state_));
    return std::string(buf.data(), 16);
}

std::string hash_hex(std::string_view text) {
    Fnv1a h;
    h.update(text);
    return h.hex();
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Fnv1a h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0) break;
        h.update(std::as_bytes(std::span(buf.data(), got)));
    }
    return h.hex();
}

}  // namespace gatescope
