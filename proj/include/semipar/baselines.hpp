#pragma once

#include "semipar/common.hpp"
#include "semipar/models.hpp"

namespace semipar {

/// Ensemble forecast record; row l of each matrix is lead l (row 0 = initial).
struct ForecastResult {
  Matrix x_mean;      // (H + 1) x n
  Matrix theta_mean;  // (H + 1) x m, empty when the method carries no theta statistics
  Matrix theta_var;   // (H + 1) x m, diagonal variances, may be empty
  Index diverged_members = 0;
  Index density_resets = 0;
  // First lead at which every member had diverged; -1 if never. Rows from
  // there on are NaN.
  Index diverged_at = -1;

  Index horizon() const { return x_mean.rows() - 1; }
  bool diverged() const { return diverged_at >= 0; }
};

/// Advances the member columns of `x` by one interval, member k using
/// theta.col(k). Diverged members are replaced by the mean of the survivors;
/// returns the number replaced, or -1 if none survived.
Index advance_members(const ParametricModel& model, const IntegratorConfig& cfg, Matrix& x,
                      const Matrix& theta);

/// theta held at its initial value.
ForecastResult persistence_forecast(const Matrix& x_ensemble, const Vector& theta,
                                    const ParametricModel& model, Index horizon,
                                    const IntegratorConfig& cfg = {});

/// Fresh theta per member and step, drawn uniformly from the training rows
/// (first m coordinates).
ForecastResult hmm_forecast(const Matrix& x_ensemble, const RowMatrix& training,
                            const ParametricModel& model, Index horizon, Rng& rng,
                            const IntegratorConfig& cfg = {});

/// theta mean and variance advanced by the fitted OU closed form; every member
/// uses the forecast mean at the start of each interval.
ForecastResult msm_forecast(const Matrix& x_ensemble, const Vector& theta, const Vector& theta_var,
                            const MsmFit& fit, const ParametricModel& model, Index horizon,
                            const IntegratorConfig& cfg = {});

/// Ensemble forecast with the full system; x is the first `n` coordinates.
ForecastResult perfect_forecast(const Matrix& ensemble, const Dynamics& dynamics, Index n,
                                Index horizon, std::uint64_t seed,
                                const IntegratorConfig& cfg = {});

}  // namespace semipar
