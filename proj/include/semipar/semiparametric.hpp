#pragma once

#include "semipar/baselines.hpp"
#include "semipar/dforecast.hpp"
#include "semipar/enkf.hpp"

namespace semipar {

/// Trained nonparametric model of the parameters. The physical theta fed to the
/// parametric model is the first `param_dim` coordinates of a training point.
struct NonparametricModel {
  DiffusionBasis basis;
  ShiftOperator shift;
  Index param_dim = 1;

  /// First m coordinates of training row i.
  Vector theta(Index i) const { return basis.points.row(i).head(param_dim).transpose(); }
  Vector equilibrium_coeffs() const;
};

NonparametricModel train_nonparametric(const TimeSeries& embedded, Index param_dim,
                                       const GeometryConfig& cfg = {});

/// x ensemble paired each step with K rejection samples of the forecast density.
ForecastResult semiparametric_forecast(const Matrix& x_ensemble, const SampledDensity& initial,
                                       const ParametricModel& model, const NonparametricModel& np,
                                       Index horizon, Rng& rng, const IntegratorConfig& cfg = {});

/// Coefficient version of the above; the initial density is reconstructed from c.
ForecastResult semiparametric_forecast(const Matrix& x_ensemble, const Vector& coeffs,
                                       const ParametricModel& model, const NonparametricModel& np,
                                       Index horizon, Rng& rng, const IntegratorConfig& cfg = {});

struct SemiState {
  GaussianBelief belief;  // over (x, theta), theta = physical parameters
  Vector coeffs;          // c^a
};

struct SemiDiagnostics {
  Index density_resets = 0;
  Index diverged_members = 0;
  Index psd_repairs = 0;
  Vector last_innovation;
};

/// p^a ~ p^f exp(-1/2 |theta - theta_a|^2_{C}) on the training points,
/// normalised. Throws DensityCollapseError when nothing survives.
SampledDensity bayes_update(const SampledDensity& prior, const Vector& theta_a,
                            const Matrix& c_theta, const NonparametricModel& np);

SemiState initial_semi_state(const Vector& x0, const Matrix& c_xx, const Vector& theta0,
                             const Matrix& c_theta, const NonparametricModel& np);

SemiState semiparametric_filter_step(const SemiState& state, const Vector& yo,
                                     const ParametricModel& model, const ObservationModel& obs,
                                     const NonparametricModel& np, const IntegratorConfig& cfg,
                                     SemiDiagnostics* diag = nullptr);

struct SemiFilterRun {
  std::vector<SemiState> states;  // one per assimilated observation
  SemiDiagnostics diagnostics;
  Index failed_at = -1;           // observation index of an unrecoverable divergence
  std::string failure;
};

/// Assimilates every row of `observations`; the first row is assimilated
/// directly into `initial` (no forecast).
SemiFilterRun run_filter(const TimeSeries& observations, const SemiState& initial,
                         const ParametricModel& model, const ObservationModel& obs,
                         const NonparametricModel& np, const IntegratorConfig& cfg = {});

}  // namespace semipar
