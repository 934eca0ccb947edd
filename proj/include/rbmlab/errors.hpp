#pragma once

#include <stdexcept>
#include <string>

namespace rbmlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown model family, malformed config, schema violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Exact enumeration requested beyond the supported size.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Mathematical domain failure (singular or indefinite matrices).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A trajectory produced non-finite coordinates.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

}  // namespace rbmlab
