#pragma once

#include <stdexcept>
#include <string>

namespace gridcox {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad arguments, malformed files, inconsistent shapes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A point that lies outside the domain covered by a mesh.
class OutOfDomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed row in an input file. Carries the 1-based data row number.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t row, const std::string& what)
      : ValidationError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class NonMonotoneTimeError : public ParseError {
 public:
  using ParseError::ParseError;
};

class AngleRangeError : public ParseError {
 public:
  using ParseError::ParseError;
};

class MalformedRowError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// A closed-form expression requested outside the parameter region where it exists.
class NoClosedFormError : public Error {
 public:
  using Error::Error;
};

/// Sparse factorization failed: matrix not positive definite for these parameters.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure hit its iteration cap before meeting its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridcox
