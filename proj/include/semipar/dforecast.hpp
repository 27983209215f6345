#pragma once

#include "semipar/common.hpp"
#include "semipar/geometry.hpp"

namespace semipar {

/// Density values on the training points (w.r.t. the intrinsic volume).
struct SampledDensity {
  Vector values;
  bool normalized = false;
};

/// One-step coefficient propagator: c(t + tau) = A c(t).
struct ShiftOperator {
  Matrix A;
  double tau = 0.1;
};

/// Monte-Carlo mass (1/N) sum_i p_i / peq_i.
double normalization_factor(const Vector& values, const Vector& peq);

/// Clips at zero and divides by the Monte-Carlo mass. Throws
/// DensityCollapseError when the mass is below 1e-12.
SampledDensity normalize_density(Vector values, const Vector& peq);

/// c_j = (1/N) sum_i p_i phi_j(theta_i) / peq_i.
Vector project_density(const SampledDensity& p, const DiffusionBasis& basis);

/// A_lj = mean over consecutive pairs of phi_j(theta_i) phi_l(theta_{i+1}),
/// skipping pairs that straddle a segment start.
ShiftOperator build_shift_operator(const DiffusionBasis& basis);

Vector forecast_coeffs(const Vector& c, const ShiftOperator& op, Index steps);

/// max(sum_j c_j phi_j peq, 0), renormalised. `mass` receives the factor Z
/// before renormalisation.
SampledDensity reconstruct_density(const Vector& c, const DiffusionBasis& basis,
                                   double* mass = nullptr);

struct RejectionSample {
  std::vector<Index> rows;  // indices into the training points
  Index proposals = 0;
  double bound = 0.0;  // P = max p / peq

  double acceptance_rate() const {
    return proposals > 0 ? static_cast<double>(rows.size()) / static_cast<double>(proposals) : 0.0;
  }
};

/// Draws K training points with probability proportional to p / peq, using
/// uniform proposals over the training set (i.e. from peq).
RejectionSample rejection_sample(const SampledDensity& p, const DiffusionBasis& basis, Index count,
                                 Rng& rng);

struct DensityMoments {
  Vector mean;
  Matrix covariance;
};

/// Importance-weighted mean and covariance of the first `leading` coordinates
/// of the training points (all coordinates when leading < 0).
DensityMoments density_moments(const SampledDensity& p, const DiffusionBasis& basis,
                               Index leading = -1);

/// Unnormalised exp(-scale * (theta - mean)^T precision (theta - mean)) on the
/// rows of `points`, restricted to the first mean.size() coordinates. The
/// exponent is shifted by its maximum so the largest value is 1.
Vector gaussian_on_points(const RowMatrix& points, const Vector& mean, const Matrix& precision,
                          double scale);

}  // namespace semipar
