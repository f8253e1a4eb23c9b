#pragma once

#include <stdexcept>
#include <string>

namespace guesslab {

// Error taxonomy shared by the library and the CLI.
// The CLI maps these onto process exit codes: config -> 2, data -> 3, numeric -> 4.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatches between tensors or layers.
struct DimensionError : NumericError {
    explicit DimensionError(const std::string& msg) : NumericError(msg) {}
};

// Bad argument values (empty softmax input, token id out of range, ...).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LookupError : DataError {
    explicit LookupError(const std::string& msg) : DataError(msg) {}
};

}  // namespace guesslab
