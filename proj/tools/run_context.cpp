#include "run_context.hpp"

#include <cstdlib>
#include <fcntl.h>
#include <unistd.h>

#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"

namespace gatescope::cli {

namespace {
constexpr const char* kLockName = ".gatescope.lock";
constexpr const char* kSnapshotName = "resolved_config.json";
}  // namespace

fs::path resolve_output_dir(const std::optional<std::string>& flag, std::string_view command) {
    if (flag) return fs::path(*flag);
    if (const char* root = std::getenv("GATESCOPE_OUT"); root && *root) return fs::path(root) / std::string(command);
    throw ConfigError("no output directory: pass --out or set GATESCOPE_OUT");
}

RunDirectory::RunDirectory(fs::path dir) : dir_(std::move(dir)), lock_(dir_ / kLockName) {
    io::ensure_directory(dir_);
    const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw ConfigError("output directory " + dir_.string() + " is in use by another run (delete " +
                              lock_.string() + " if that run is gone)");
        throw IoError("cannot create lock file " + lock_.string());
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    (void)!::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunDirectory::~RunDirectory() {
    std::error_code ec;
    fs::remove(lock_, ec);
}

void RunDirectory::write_snapshot(const nlohmann::json& resolved, bool must_match) const {
    const fs::path path = dir_ / kSnapshotName;
    if (must_match && fs::exists(path) && io::read_json(path) != resolved)
        throw ConfigError("cannot resume: " + path.string() + " records a different configuration");
    io::write_json(path, resolved);
}

nlohmann::json load_config_file(const std::optional<std::string>& path) {
    if (!path) return nlohmann::json::object();
    if (!fs::is_regular_file(*path)) throw ConfigError("config file not found: " + *path);
    auto j = io::read_json(*path);
    if (!j.is_object()) throw ConfigError(*path + ": config file must hold a JSON object");
    return j;
}

}  // namespace gatescope::cli
