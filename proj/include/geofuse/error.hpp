#pragma once

#include <stdexcept>
#include <string>

namespace geofuse {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: invalid option values, unknown keys, mismatched
/// model/descriptor combinations. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dimension/shape mismatch between tensors or feature vectors.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Bad or degenerate data: parse failures, malformed files, degenerate
/// neighborhoods, empty batches. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure: non-finite losses or overflow during optimization.
/// CLI exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace geofuse
