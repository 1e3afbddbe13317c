#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace samlab {

/// Dense model parameters x in R^d.
using ParamVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration detected before any work starts (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  DimensionError(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// A per-sample gradient oracle returned NaN/Inf.
class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(std::size_t sample)
      : Error("non-finite gradient for sample " + std::to_string(sample)),
        sample_(sample) {}

  std::size_t sample() const { return sample_; }

 private:
  std::size_t sample_;
};

/// The iterate left the finite reals.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::int64_t step)
      : Error("non-finite iterate at step " + std::to_string(step)),
        step_(step) {}

  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

inline void require_dim(const ParamVector& v, std::size_t d) {
  if (static_cast<std::size_t>(v.size()) != d) {
    throw DimensionError(d, static_cast<std::size_t>(v.size()));
  }
}

}  // namespace samlab
