#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace r3mc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be invertible (or positive definite) is not.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// An input violates a documented precondition (skewness, orthogonality, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// The shifted factors of a retraction lost rank; the caller should shrink the step.
class RetractionFailure : public Error {
 public:
  using Error::Error;
};

/// Invalid solver / generator / command configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace r3mc
