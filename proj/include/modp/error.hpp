#pragma once

#include <stdexcept>
#include <string>

namespace modp {

// Unusable invocation: missing input file, bad flag combination, broken
// config. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Data or artifact fails a contract (bad one-hot row, unknown column,
// incompatible file version, ...). CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or other numeric breakdown. CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace modp
