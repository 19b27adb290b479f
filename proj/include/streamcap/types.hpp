#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace streamcap {

// Row-major so that one row is one token and frames stack contiguously.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXf;
using VectorD = Eigen::VectorXd;

// Ids over the augmented vocabulary: words in [0, n_words), time tokens after.
using TokenId = std::int32_t;

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called on a value that is not in the right lifecycle state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The inputs admit no meaningful answer (e.g. every finite-difference trial
// was discarded).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content; line is 1-based, 0 when not line oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace streamcap
