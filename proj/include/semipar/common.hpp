#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace semipar {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

/// Independent, reproducible random stream for (seed, stream id).
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Standard normal vector of length n drawn from rng.
Vector standard_normal(Index n, Rng& rng);

/// Uniformly sampled trajectory. Row i holds the state at t0 + i * tau.
struct TimeSeries {
  RowMatrix values;
  double tau = 0.1;
  double t0 = 0.0;
  // False once rows have been reordered; the shift operator refuses such data.
  bool temporal = true;
  // Row indices (other than 0) where a new contiguous segment starts.
  std::vector<Index> segment_starts;

  Index size() const { return values.rows(); }
  Index dim() const { return values.cols(); }
  double time(Index i) const { return t0 + tau * static_cast<double>(i); }
};

// Error hierarchy. Every failure mode named by the library has its own type so
// callers (the harness in particular) can turn recoverable events into data.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDimensionError : public Error { using Error::Error; };
class InvalidParameterError : public Error { using Error::Error; };
class DegenerateDataError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class DegenerateGeometryError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class DimensionMismatchError : public Error { using Error::Error; };
class DensityCollapseError : public Error { using Error::Error; };
class PathologicalDensityError : public Error { using Error::Error; };
class CovarianceError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

/// A trajectory left the finite domain (|z_i| > 1e6 or non-finite).
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, Index step) : Error(what), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

/// A filter lost track of the observations.
class FilterDivergenceError : public Error {
 public:
  FilterDivergenceError(const std::string& what, Index step) : Error(what), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

/// Adaptive noise estimation did not settle. Carries the parameter history.
class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, std::vector<Vector> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<Vector>& history() const { return history_; }

 private:
  std::vector<Vector> history_;
};

}  // namespace semipar
