#include "gatescope/common/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gatescope/common/error.hpp"

namespace gatescope::io {

static_assert(std::endian::native == std::endian::little,
              "binary payloads are written in host order and assume a little-endian host");

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) ensure_directory(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("short write to " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
}

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& value) {
    write_text(path, value.dump(2) + "\n");
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<float> values(expected_count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(expected_count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != expected_count * sizeof(float)) {
        throw IoError("payload " + path.string() + " is shorter than its header declares");
    }
    in.peek();
    if (!in.eof()) throw IoError("payload " + path.string() + " is longer than its header declares");
    return values;
}

void write_f32(const fs::path& path, std::span<const float> values) {
    std::string bytes(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    write_text(path, bytes);
}

std::string format_real(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace gatescope::io

namespace gatescope::io {

void require_known_keys(const nlohmann::json& object, std::initializer_list<std::string_view> allowed,
                        std::string_view context) {
    if (!object.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
    for (const auto& [key, value] : object.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
}

}  // namespace gatescope::io
