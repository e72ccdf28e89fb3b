#pragma once

#include <stdexcept>
#include <string>

namespace maskgate {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or dimension mismatch between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (model/train settings, conv geometry, placements).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Semantically invalid data (labels out of range, count mismatches).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, truncation, ragged rows).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// API misuse (backward on non-scalar, stepping without gradients).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (unwritable paths, missing files).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure during training (non-finite loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid pruning plan (no non-linear path would remain).
class PlanError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskgate
