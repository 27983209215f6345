#pragma once

#include <functional>

#include "semipar/common.hpp"
#include "semipar/models.hpp"

namespace semipar {

struct GaussianBelief {
  Vector mean;
  Matrix cov;

  Index dim() const { return mean.size(); }
};

/// Members are stored as columns.
struct Ensemble {
  Matrix members;
  bool resampled = false;

  Index size() const { return members.cols(); }
  Index dim() const { return members.rows(); }
};

/// Linear observation y = H z + eta, eta ~ N(0, R).
struct ObservationModel {
  Matrix H;
  Matrix R;

  Index obs_dim() const { return H.rows(); }
  void validate(Index state_dim) const;
};

/// Identity observation of the first n entries of a d-dimensional state.
ObservationModel observe_leading(Index n, Index state_dim, double noise_variance);

/// Symmetric square root. Eigenvalues down to -1e-10 (relative) are treated as
/// round-off and clipped; anything more negative throws CovarianceError.
Matrix spd_sqrt(const Matrix& c);

/// Nearest PSD matrix by eigenvalue clipping.
Matrix psd_repair(const Matrix& c);

/// Q = U L V^T  ->  U L U^T, symmetrised.
Matrix project_spd(const Matrix& q);

/// 2d members mean +/- sqrt(d) * columns of C^(1/2).
Ensemble sigma_ensemble(const GaussianBelief& belief);

/// Mean and 1/K covariance of the members.
GaussianBelief ensemble_moments(const Matrix& members);

struct AnalysisResult {
  GaussianBelief belief;
  Matrix gain;
  Vector innovation;      // y^o - y^f
  Matrix innovation_cov;  // C_yy including R
};

/// Kalman update from forecast and observation ensembles (1/K statistics,
/// R added to C_yy).
AnalysisResult enkf_analysis(const Matrix& zf, const Matrix& yf, const Vector& yo, const Matrix& R);

/// Resamples sigma points from the prior and applies enkf_analysis.
AnalysisResult assimilate(const GaussianBelief& prior, const ObservationModel& obs,
                          const Vector& yo);

/// Advances one member over one observation interval; returns false on divergence.
using Propagator = std::function<bool(Vector& z, Index member, Rng& rng)>;

struct ForecastStep {
  Matrix initial;  // sigma members of the analysis
  Matrix members;  // propagated members
  GaussianBelief moments;
  Index diverged = 0;
};

/// Sigma ensemble of `analysis` pushed through `propagate`. Diverged members are
/// replaced by the mean of the surviving ones; if none survive the step throws
/// FilterDivergenceError. Member k uses stream (seed, step * 2d + k).
ForecastStep ensemble_forecast(const GaussianBelief& analysis, const Propagator& propagate,
                               std::uint64_t seed, Index step);

/// Flags runs whose innovations stay above `factor` climatological SDs for
/// `window` consecutive steps.
class DivergenceMonitor {
 public:
  DivergenceMonitor(double climatological_sd, double factor = 10.0, Index window = 20);
  void observe(const Vector& innovation, Index step);

 private:
  double threshold_;
  Index window_;
  Index run_ = 0;
};

/// RMS spread of an observation series about its time mean.
double observation_climatology_sd(const TimeSeries& observations);

struct AugmentedFilterConfig {
  IntegratorConfig integrator;
  std::uint64_t seed = 0;
};

/// Augmented (x, theta) filter with theta modelled as a random walk of rate Q
/// (Q tau is added over each observation interval). Returns analysis means, one row per observation.
TimeSeries extract_theta_series(const TimeSeries& observations, const ParametricModel& model,
                                const ObservationModel& obs, const Matrix& Q,
                                const GaussianBelief& initial,
                                const AugmentedFilterConfig& cfg = {});

/// Propagator for the augmented state (x, theta): x advances under the model
/// with theta held, theta is left unchanged.
Propagator augmented_propagator(const ParametricModel& model, const IntegratorConfig& cfg);

/// Embeds a theta-block covariance into the full (n + m) matrix.
Matrix embed_theta_block(const Matrix& q_theta, Index n);

}  // namespace semipar
