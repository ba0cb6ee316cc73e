#pragma once

#include <stdexcept>
#include <string>

namespace cpl {

/// Bad configuration value (out-of-range hyperparameter, empty corpus, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition (malformed sequence, bad id, ...).
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value reached a numeric kernel.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cpl
