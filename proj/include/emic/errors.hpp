#pragma once

#include <stdexcept>
#include <string>

namespace emic {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
struct DimError : Error {
    using Error::Error;
};

// Invalid configuration value (gamma out of range, bad head split, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Bad input data: file contents, container bytes, empty masks.
struct DataError : Error {
    using Error::Error;
};

// A forward primitive produced NaN/Inf.
struct NumericError : Error {
    using Error::Error;
};

// API misuse (non-scalar loss, mode violations).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace emic
