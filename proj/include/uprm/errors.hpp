#pragma once

#include <stdexcept>
#include <string>

namespace uprm {

/// Exit codes used by the command line front-end.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kData = 3,
  kBackend = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad configuration: unknown keys, invalid hyperparameters, empty templates.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Malformed or invariant-violating input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Scoring backend failure. Retryable errors are transport-level (timeouts,
/// connection resets, 5xx); everything else is fatal.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(ExitCode::kBackend, what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

/// The joint context no longer fits the backend's context window.
class ContextOverflowError : public BackendError {
 public:
  ContextOverflowError(const std::string& what, std::size_t trajectory_index)
      : BackendError(what, false), trajectory_index_(trajectory_index) {}
  std::size_t trajectory_index() const noexcept { return trajectory_index_; }

 private:
  std::size_t trajectory_index_;
};

/// Non-finite values and failed numeric checks.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

/// Argument outside an operation's domain: first-error position out of
/// range, incompatible tensor shapes, misaligned series.
class DomainError : public NumericError {
 public:
  explicit DomainError(const std::string& what) : NumericError(what) {}
};

}  // namespace uprm
