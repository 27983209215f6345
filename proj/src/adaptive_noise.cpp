#include "semipar/adaptive_noise.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace semipar {

Matrix QParameterization::assemble(const Vector& q) const {
  if (q.size() != size()) throw DimensionMismatchError("parameter count mismatch");
  Matrix out = Matrix::Zero(dim, dim);
  for (Index r = 0; r < size(); ++r) {
    for (const Entry& e : basis[static_cast<std::size_t>(r)]) out(e.row, e.col) += q(r) * e.value;
  }
  return out;
}

QParameterization QParameterization::cross_covariance(Index n, Index m) {
  QParameterization p;
  p.dim = n + m;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      p.basis.push_back({{n + i, j, 1.0}, {j, n + i, 1.0}});
    }
  }
  return p;
}

QParameterization QParameterization::diagonal(Index dim) {
  QParameterization p;
  p.dim = dim;
  for (Index i = 0; i < dim; ++i) p.basis.push_back({{i, i, 1.0}});
  return p;
}

namespace {

// H F from central differences of the sigma pairs: F ~ (Z+ - Z-) S^+ / (2 sqrt d).
Matrix linearized_observation(const ForecastStep& fc, const Vector& mean, const Matrix& H) {
  const Index d = mean.size();
  const Matrix s = (fc.initial.leftCols(d).colwise() - mean) / std::sqrt(static_cast<double>(d));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  const Vector values = eig.eigenvalues();
  const double cutoff = 1e-12 * std::max(1e-300, values.cwiseAbs().maxCoeff());
  Vector inv = Vector::Zero(d);
  for (Index i = 0; i < d; ++i) {
    if (std::abs(values(i)) > cutoff) inv(i) = 1.0 / values(i);
  }
  const Matrix pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  const Matrix diff = H * (fc.members.leftCols(d) - fc.members.rightCols(d));
  return diff * pinv / (2.0 * std::sqrt(static_cast<double>(d)));
}

struct PendingStep {
  Vector innovation;
  Matrix gain;
  Matrix forecast_cov;  // without Q
  bool valid = false;
};

// Normalised innovation squared against a 10-sigma chi-square bound; the
// innovation and its predicted spread must also stay within climatology.
bool innovation_in_gate(const AnalysisResult& an, double climate_sd) {
  const double p = static_cast<double>(an.innovation.size());
  const double nis = an.innovation.dot(an.innovation_cov.ldlt().solve(an.innovation));
  const double climate_var = climate_sd * climate_sd;
  return std::isfinite(nis) && nis <= p + 10.0 * std::sqrt(2.0 * p) &&
         an.innovation.squaredNorm() / p <= climate_var &&
         an.innovation_cov.trace() / p <= climate_var;
}

}  // namespace

NoiseEstimate adaptive_estimate_Q(const TimeSeries& observations, const Propagator& propagate,
                                  const ObservationModel& obs, const QParameterization& param,
                                  const GaussianBelief& initial, const AdaptiveQConfig& cfg) {
  const Index d = initial.dim();
  obs.validate(d);
  if (param.dim != d) throw DimensionMismatchError("parameterisation does not match the state");
  if (observations.size() < cfg.min_observations) {
    throw InsufficientDataError("adaptive noise estimation needs a longer observation record");
  }
  if (observations.dim() != obs.obs_dim()) throw DimensionMismatchError("observation width mismatch");
  if (cfg.window < 1 || cfg.solve_every < 1 || !(cfg.damping > 0.0) || cfg.max_sweeps < 1) {
    throw InvalidParameterError("invalid adaptive estimation settings");
  }
  const Index r_count = param.size();
  const Matrix& H = obs.H;
  const Matrix hth = H.transpose() * H;
  const double keep = 1.0 - 1.0 / static_cast<double>(cfg.window);

  Matrix q0 = Matrix::Zero(d, d);
  for (Index i = d - cfg.theta_dim; i < d; ++i) q0(i, i) = cfg.initial_theta_variance;

  NoiseEstimate out;
  out.parameterization = param;
  Vector q = Vector::Zero(r_count);
  bool have_estimate = false;
  Vector previous_average;
  const double climate_sd = observation_climatology_sd(observations);
  // Q is a rate: the filter adds Q tau between observations, while the lag-one
  // relation is solved on the per-step scale without rescaling.
  const double tau = observations.tau;

  for (Index sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    Matrix normal = Matrix::Zero(r_count, r_count);
    Vector rhs = Vector::Zero(r_count);
    Vector q_sum = Vector::Zero(r_count);
    Index q_count = 0;
    Matrix q_filter = (have_estimate ? project_spd(param.assemble(q)) : q0) * tau;

    DivergenceMonitor monitor(climate_sd);
    GaussianBelief prior = initial;
    PendingStep pending;
    for (Index k = 0; k < observations.size(); ++k) {
      const Vector yo = observations.values.row(k).transpose();
      Matrix forecast_cov;
      if (k > 0) {
        const Vector analysis_mean = prior.mean;
        ForecastStep fc = ensemble_forecast(prior, propagate, cfg.seed + 7919 * sweep, k);
        forecast_cov = fc.moments.cov;
        prior = fc.moments;
        prior.cov += q_filter;
        const AnalysisResult an = assimilate(prior, obs, yo);
        monitor.observe(an.innovation, k);

        // Steps with lost members or wild innovations carry distorted moments;
        // keep them out of the statistics.
        const bool usable = fc.diverged == 0 && innovation_in_gate(an, climate_sd);
        if (pending.valid && usable) {
          // Lhs = e_{k} e_{k-1}^T + G K e_{k-1} e_{k-1}^T - G P^f H^T = sum_r q_r G Q_r H^T
          const Matrix g = linearized_observation(fc, analysis_mean, H);
          const Matrix outer = pending.innovation * pending.innovation.transpose();
          const Matrix lhs = an.innovation * pending.innovation.transpose() +
                             g * pending.gain * outer -
                             g * pending.forecast_cov * H.transpose();
          const Matrix gtg = g.transpose() * g;
          const Matrix projected = g.transpose() * lhs * H;
          Matrix step_normal(r_count, r_count);
          Vector step_rhs(r_count);
          for (Index r = 0; r < r_count; ++r) {
            const auto& er = param.basis[static_cast<std::size_t>(r)];
            double b = 0.0;
            for (const auto& e : er) b += e.value * projected(e.row, e.col);
            step_rhs(r) = b;
            for (Index s = 0; s <= r; ++s) {
              double v = 0.0;
              for (const auto& e : er) {
                for (const auto& f : param.basis[static_cast<std::size_t>(s)]) {
                  v += e.value * f.value * gtg(e.row, f.row) * hth(e.col, f.col);
                }
              }
              step_normal(r, s) = v;
              step_normal(s, r) = v;
            }
          }
          normal = keep * normal + (1.0 - keep) * step_normal;
          rhs = keep * rhs + (1.0 - keep) * step_rhs;

          if (k >= cfg.warmup && k % cfg.solve_every == 0) {
            Matrix reg = normal;
            const double ridge = 1e-10 * std::max(reg.trace() / static_cast<double>(r_count), 1e-300);
            reg.diagonal().array() += ridge;
            const Vector q_ls = reg.ldlt().solve(rhs);
            if (q_ls.allFinite()) {
              q += cfg.damping * (q_ls - q);
              have_estimate = true;
              q_filter = project_spd(param.assemble(q)) * tau;
              q_sum += q;
              ++q_count;
            }
          }
        }
        pending.innovation = an.innovation;
        pending.gain = an.gain.topRows(d);
        pending.forecast_cov = forecast_cov;
        pending.valid = usable;
        prior = an.belief;
      } else {
        const AnalysisResult an = assimilate(prior, obs, yo);
        prior = an.belief;
      }
    }

    if (q_count == 0) throw EstimationError("no least-squares solves were possible", out.history);
    const Vector average = q_sum / static_cast<double>(q_count);
    out.history.push_back(average);
    out.sweeps = sweep + 1;
    q = average;
    if (previous_average.size() == r_count) {
      const double denom = std::max(previous_average.norm(), 1e-300);
      if ((average - previous_average).norm() / denom < cfg.tolerance) {
        out.q = average;
        out.Q = param.assemble(average);
        out.Qhat = project_spd(out.Q);
        return out;
      }
    }
    previous_average = average;
  }
  std::ostringstream msg;
  msg << "noise parameters did not settle within " << cfg.max_sweeps << " sweeps";
  throw EstimationError(msg.str(), out.history);
}

NoiseEstimate adaptive_estimate_Q(const TimeSeries& observations, const ParametricModel& model,
                                  const ObservationModel& obs, const QParameterization& param,
                                  const GaussianBelief& initial, const AdaptiveQConfig& cfg) {
  AdaptiveQConfig local = cfg;
  if (local.theta_dim == 0) local.theta_dim = model.param_dim();
  return adaptive_estimate_Q(observations, augmented_propagator(model, cfg.integrator), obs, param,
                             initial, local);
}

}  // namespace semipar
