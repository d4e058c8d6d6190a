#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace gatescope::cli {

namespace fs = std::filesystem;

/// --out if given, else $GATESCOPE_OUT/<command>.
fs::path resolve_output_dir(const std::optional<std::string>& flag, std::string_view command);

/// Owns one output directory for the lifetime of a run: creates it, holds
/// an exclusive lock file and writes the resolved-config snapshot.
class RunDirectory {
public:
    explicit RunDirectory(fs::path dir);
    ~RunDirectory();
    RunDirectory(const RunDirectory&) = delete;
    RunDirectory& operator=(const RunDirectory&) = delete;

    const fs::path& path() const { return dir_; }

    /// With `must_match`, an existing snapshot has to be identical (resumed runs).
    void write_snapshot(const nlohmann::json& resolved, bool must_match = false) const;

private:
    fs::path dir_;
    fs::path lock_;
};

nlohmann::json load_config_file(const std::optional<std::string>& path);

}  // namespace gatescope::cli
