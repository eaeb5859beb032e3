#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfpca {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument to a numerical routine (non-finite input, bad tuning, empty sample).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data; carries the 1-based line number when known (0 otherwise).
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The estimator cannot be applied to the supplied data (e.g. naive on incomplete data).
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular system, degenerate component, rank deficiency.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfpca
