#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trendeq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `row()` is the 1-based data row (header excluded),
/// or 0 when the problem is not tied to a row.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Cholesky factorization failed even at the largest jitter.
class IllConditionedKernel : public Error {
 public:
  IllConditionedKernel() : Error("ill-conditioned kernel") {}
};

class FitError : public Error {
 public:
  using Error::Error;
};

/// A series whose observations cover a single age cannot define a grid.
class DegenerateRange : public Error {
 public:
  DegenerateRange() : Error("degenerate range") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace trendeq
