#pragma once

#include <filesystem>
#include <initializer_list>
#include <span>
#include <string_view>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gatescope::io {

namespace fs = std::filesystem;

void ensure_directory(const fs::path& dir);

std::string read_text(const fs::path& path);
/// Writes through a temporary sibling and renames, so readers never observe a partial file.
void write_text(const fs::path& path, const std::string& text);

nlohmann::json read_json(const fs::path& path);
/// Pretty-printed with sorted keys and a trailing newline; byte-stable for equal input.
void write_json(const fs::path& path, const nlohmann::json& value);

/// Throws ConfigError naming the first key of `object` not in `allowed`.
void require_known_keys(const nlohmann::json& object, std::initializer_list<std::string_view> allowed,
                        std::string_view context);

/// Raw little-endian float32 payloads.
std::vector<float> read_f32(const fs::path& path, std::size_t expected_count);
void write_f32(const fs::path& path, std::span<const float> values);

/// Formats a double with 17 significant digits (round-trippable).
std::string format_real(double value);

}  // namespace gatescope::io
