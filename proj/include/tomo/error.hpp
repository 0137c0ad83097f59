#pragma once

#include <stdexcept>
#include <string>

namespace tomo {

// Exception families map one-to-one onto CLI exit codes (see cli.hpp).

/// Invalid parameters, unknown configuration keys, violated preconditions.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated files, unwritable paths.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite iterates, solver breakdown that cannot be recovered.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tomo
