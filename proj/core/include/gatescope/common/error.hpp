#pragma once

#include <stdexcept>
#include <string>

namespace gatescope {

/// Invalid input, configuration or precondition. The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Divergence or degenerate geometry. The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ConfigError(message);
}

}  // namespace gatescope
