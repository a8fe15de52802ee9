#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace dcsysid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hyperparameter or argument lies outside its admissible range.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An inverse, factorization or determinant was requested on the singular
/// boundary (c = 0, lambda in {0, 1}, |rho| = 1).
class SingularityError : public DomainError {
 public:
  SingularityError(std::string parameter, const std::string& what)
      : DomainError(what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

/// A partial band matrix admits no positive definite completion.
class FeasibilityError : public Error {
 public:
  FeasibilityError(std::size_t block, const std::string& what)
      : Error(what), block_(block) {}
  /// Zero-based index of the first non positive definite principal block.
  std::size_t block() const noexcept { return block_; }

 private:
  std::size_t block_;
};

/// Floating point breakdown (failed Cholesky, singular triangular factor).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The regressor does not have full column rank.
class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(std::size_t column, const std::string& what)
      : NumericalError(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Malformed input text; line is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class TuningError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcsysid
