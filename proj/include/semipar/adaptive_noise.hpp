#pragma once

#include "semipar/enkf.hpp"

namespace semipar {

/// Q = sum_r q_r Q_r with each Q_r a fixed sparse symmetric pattern.
struct QParameterization {
  struct Entry {
    Index row;
    Index col;
    double value;
  };

  Index dim = 0;
  std::vector<std::vector<Entry>> basis;

  Index size() const { return static_cast<Index>(basis.size()); }
  Matrix assemble(const Vector& q) const;

  /// One parameter per entry of Q_theta,x (mirrored into Q_x,theta); theta
  /// occupies the last m coordinates. Q_theta,theta is left to the SPD projection.
  static QParameterization cross_covariance(Index n, Index m);
  /// One parameter per diagonal entry.
  static QParameterization diagonal(Index dim);
};

struct AdaptiveQConfig {
  IntegratorConfig integrator;
  Index window = 500;       // exponential averaging length of the innovation statistics
  Index solve_every = 25;   // steps between least-squares solves
  Index warmup = 500;       // steps before the first solve
  double damping = 0.1;
  double tolerance = 0.05;  // relative change between sweep averages
  Index max_sweeps = 20;
  Index min_observations = 2000;
  // Theta-block rate used until the first solve.
  double initial_theta_variance = 1e-2;
  Index theta_dim = 0;  // trailing coordinates seeded with initial_theta_variance
  std::uint64_t seed = 0;
};

struct NoiseEstimate {
  Vector q;
  Matrix Q;     // sum_r q_r Q_r
  Matrix Qhat;  // SPD projection
  QParameterization parameterization;
  std::vector<Vector> history;  // per-sweep averages of q
  Index sweeps = 0;

  /// Trailing m x m block of Qhat.
  Matrix theta_block(Index m) const { return Qhat.bottomRightCorner(m, m); }
};

/// Innovation-based estimate of the model noise rate Q, from lag-0 and lag-1
/// innovation statistics of an unscented EnKF that adds Q tau per interval.
NoiseEstimate adaptive_estimate_Q(const TimeSeries& observations, const Propagator& propagate,
                                  const ObservationModel& obs, const QParameterization& param,
                                  const GaussianBelief& initial, const AdaptiveQConfig& cfg);

NoiseEstimate adaptive_estimate_Q(const TimeSeries& observations, const ParametricModel& model,
                                  const ObservationModel& obs, const QParameterization& param,
                                  const GaussianBelief& initial, const AdaptiveQConfig& cfg);

}  // namespace semipar
