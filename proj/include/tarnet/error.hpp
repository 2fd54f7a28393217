#pragma once

#include <stdexcept>
#include <string>

namespace tarnet {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed network or configuration description (usage-level problem).
class InvalidSpecError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input vector/matrix sizes disagree with what the model or estimator expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Bad, empty or degenerate data (single treatment group, unparseable CSV...).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public DataError {
 public:
  enum class Kind { version_mismatch, corrupt, shape_mismatch };

  CheckpointError(Kind kind, const std::string& what)
      : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Non-finite loss or gradient, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tarnet
