#pragma once

#include <stdexcept>
#include <string>

namespace alba {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration value or unsupported setting.
struct ConfigError : Error {
  using Error::Error;
};

// Tensor shape / dimension mismatch; message names the op and both shapes.
struct DimensionError : Error {
  using Error::Error;
};

// Malformed or inconsistent data (corpus records, lengths, ratios).
struct DataError : Error {
  using Error::Error;
};

// Token id outside the vocabulary.
struct VocabError : DataError {
  using DataError::DataError;
};

// Filesystem / container format problems. Subtypes keep load failures distinct.
struct IoError : Error {
  using Error::Error;
};
struct BadMagicError : IoError {
  using IoError::IoError;
};
struct VersionError : IoError {
  using IoError::IoError;
};
struct ChecksumError : IoError {
  using IoError::IoError;
};
struct NameSetError : IoError {
  using IoError::IoError;
};

// Adapter pack vs backbone fingerprint disagreement.
struct CompatibilityError : Error {
  using Error::Error;
};

// Training aborts (NaN loss, missing gradient).
struct TrainingError : Error {
  using Error::Error;
};

// Metric preconditions (zero norms, empty sets).
struct MetricError : Error {
  using Error::Error;
};

// API contract violations (e.g. non-scalar function handed to grad_check).
struct ContractError : Error {
  using Error::Error;
};

struct ServingError : Error {
  using Error::Error;
};

}  // namespace alba
