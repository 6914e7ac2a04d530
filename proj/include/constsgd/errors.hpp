#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace constsgd {

// Argument and index violations use std::invalid_argument / std::out_of_range.
// Everything numerical derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A drift matrix has an eigenvalue with non-positive real part.
class StabilityError : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public Error {
 public:
  using Error::Error;
};

// Zero noise trace, zero diagonal entry, or a collapsed variational moment.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd best, double grad_norm)
      : Error(what), best_(std::move(best)), grad_norm_(grad_norm) {}

  const Eigen::VectorXd& best_iterate() const { return best_; }
  double gradient_norm() const { return grad_norm_; }

 private:
  Eigen::VectorXd best_;
  double grad_norm_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

// CSV parse failure. Row and column are 1-based positions in the file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what + " at row " + std::to_string(row) + ", column " + std::to_string(column)),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class NormalizationError : public Error {
 public:
  NormalizationError(const std::string& what, std::size_t index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace constsgd
