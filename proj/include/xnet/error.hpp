#pragma once

#include <stdexcept>
#include <string>

namespace xnet {

// Exit codes used by the command-line tool. Library code throws the matching
// exception type and the CLI maps it.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode code() const noexcept { return ExitCode::kData; }
  virtual const char* kind() const noexcept { return "error"; }
};

/// Shape or extent mismatch between tensors, or an op precondition on extents.
class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// Misuse of the gradient tape (reused tape, non-scalar loss, missing grad).
class AutodiffError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "autodiff"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kConfig; }
  const char* kind() const noexcept override { return "config"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kData; }
  const char* kind() const noexcept override { return "data"; }
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "checkpoint"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode code() const noexcept override { return ExitCode::kNumeric; }
  const char* kind() const noexcept override { return "numeric"; }
};

}  // namespace xnet
