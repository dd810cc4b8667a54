#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace latax {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, broken invariants, or inconsistent shapes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFiniteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Raised by Gram-Schmidt when a vector's residual collapses below tolerance.
class DependenceError : public ValidationError {
 public:
  DependenceError(std::size_t index, const std::string& what)
      : ValidationError(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Labels with zero variance cannot define a direction.
class DegenerateAttributeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A new attribute direction lies (numerically) inside the span of the base axes.
class InseparableAttributeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnknownAxisError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class VersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Filesystem failures. The CLI maps these to exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace latax
