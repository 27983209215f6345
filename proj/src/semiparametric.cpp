#include "semipar/semiparametric.hpp"

#include <cmath>

namespace semipar {

namespace {

// Forecast density for coefficients c, resetting to the equilibrium on collapse.
SampledDensity density_or_reset(Vector& c, const NonparametricModel& np, Index& resets) {
  try {
    return reconstruct_density(c, np.basis);
  } catch (const DensityCollapseError&) {
    ++resets;
    c = np.equilibrium_coeffs();
    return reconstruct_density(c, np.basis);
  }
}

void record_theta(ForecastResult& out, Index lead, const SampledDensity& p,
                  const NonparametricModel& np) {
  const DensityMoments mom = density_moments(p, np.basis, np.param_dim);
  out.theta_mean.row(lead) = mom.mean.transpose();
  out.theta_var.row(lead) = mom.covariance.diagonal().transpose();
}

}  // namespace

Vector NonparametricModel::equilibrium_coeffs() const {
  Vector c = Vector::Zero(basis.modes());
  c(0) = 1.0;
  return c;
}

NonparametricModel train_nonparametric(const TimeSeries& embedded, Index param_dim,
                                       const GeometryConfig& cfg) {
  if (param_dim < 1 || param_dim > embedded.dim()) {
    throw InvalidDimensionError("parameter block must fit in the embedded coordinates");
  }
  NonparametricModel np;
  np.basis = build_basis(embedded, cfg);
  np.shift = build_shift_operator(np.basis);
  np.param_dim = param_dim;
  return np;
}

namespace {

// `sampled` (when given) replaces the reconstruction of `coeffs` for the first
// draw only; the coefficient trajectory is unaffected.
ForecastResult run_semiparametric(const Matrix& x_ensemble, const Vector& coeffs,
                                  const SampledDensity* sampled, const ParametricModel& model,
                                  const NonparametricModel& np, Index horizon, Rng& rng,
                                  const IntegratorConfig& cfg) {
  if (np.param_dim != model.param_dim()) {
    throw DimensionMismatchError("nonparametric and parametric models disagree on theta");
  }
  if (horizon < 0) throw InvalidParameterError("negative forecast horizon");
  const Index k = x_ensemble.cols();
  const Index m = np.param_dim;
  ForecastResult out;
  out.x_mean.resize(horizon + 1, x_ensemble.rows());
  out.theta_mean.resize(horizon + 1, m);
  out.theta_var.resize(horizon + 1, m);
  out.x_mean.row(0) = x_ensemble.rowwise().mean().transpose();

  Vector c = coeffs;
  SampledDensity p = sampled != nullptr ? *sampled : density_or_reset(c, np, out.density_resets);
  record_theta(out, 0, p, np);
  Matrix x = x_ensemble;
  Matrix thetas(m, k);
  for (Index l = 1; l <= horizon; ++l) {
    RejectionSample draw;
    try {
      draw = rejection_sample(p, np.basis, k, rng);
    } catch (const PathologicalDensityError&) {
      ++out.density_resets;
      c = np.equilibrium_coeffs();
      p = reconstruct_density(c, np.basis);
      draw = rejection_sample(p, np.basis, k, rng);
    }
    for (Index j = 0; j < k; ++j) thetas.col(j) = np.theta(draw.rows[static_cast<std::size_t>(j)]);
    const Index lost = out.diverged() ? 0 : advance_members(model, cfg, x, thetas);
    if (lost < 0) {
      out.diverged_at = l;
      out.x_mean.bottomRows(horizon + 1 - l).setConstant(std::nan(""));
    } else if (!out.diverged()) {
      out.diverged_members += lost;
      out.x_mean.row(l) = x.rowwise().mean().transpose();
    }
    // The parameter density evolves independently of x.
    c = np.shift.A * c;
    p = density_or_reset(c, np, out.density_resets);
    record_theta(out, l, p, np);
  }
  return out;
}

}  // namespace

ForecastResult semiparametric_forecast(const Matrix& x_ensemble, const Vector& coeffs,
                                       const ParametricModel& model, const NonparametricModel& np,
                                       Index horizon, Rng& rng, const IntegratorConfig& cfg) {
  return run_semiparametric(x_ensemble, coeffs, nullptr, model, np, horizon, rng, cfg);
}

ForecastResult semiparametric_forecast(const Matrix& x_ensemble, const SampledDensity& initial,
                                       const ParametricModel& model, const NonparametricModel& np,
                                       Index horizon, Rng& rng, const IntegratorConfig& cfg) {
  const SampledDensity p0 =
      initial.normalized ? initial : normalize_density(initial.values, np.basis.peq);
  return run_semiparametric(x_ensemble, project_density(p0, np.basis), &p0, model, np, horizon,
                            rng, cfg);
}

SampledDensity bayes_update(const SampledDensity& prior, const Vector& theta_a,
                            const Matrix& c_theta, const NonparametricModel& np) {
  Matrix c = 0.5 * (c_theta + c_theta.transpose());
  c.diagonal().array() += 1e-10;
  const Matrix precision = c.ldlt().solve(Matrix::Identity(c.rows(), c.cols()));
  const Vector likelihood = gaussian_on_points(np.basis.points, theta_a, precision, 0.5);
  return normalize_density(prior.values.cwiseProduct(likelihood), np.basis.peq);
}

SemiState initial_semi_state(const Vector& x0, const Matrix& c_xx, const Vector& theta0,
                             const Matrix& c_theta, const NonparametricModel& np) {
  const Index n = x0.size();
  const Index m = theta0.size();
  if (m != np.param_dim) throw DimensionMismatchError("theta dimension mismatch");
  SemiState s;
  s.belief.mean.resize(n + m);
  s.belief.mean << x0, theta0;
  s.belief.cov = Matrix::Zero(n + m, n + m);
  s.belief.cov.topLeftCorner(n, n) = c_xx;
  s.belief.cov.bottomRightCorner(m, m) = c_theta;
  // Non-informative prior: p^a = peq.
  SampledDensity flat;
  flat.values = np.basis.peq;
  flat.normalized = true;
  s.coeffs = project_density(flat, np.basis);
  return s;
}

SemiState semiparametric_filter_step(const SemiState& state, const Vector& yo,
                                     const ParametricModel& model, const ObservationModel& obs,
                                     const NonparametricModel& np, const IntegratorConfig& cfg,
                                     SemiDiagnostics* diag) {
  SemiDiagnostics local;
  SemiDiagnostics& d = diag != nullptr ? *diag : local;
  const Index n = model.state_dim();
  const Index m = model.param_dim();
  if (state.belief.dim() != n + m) throw DimensionMismatchError("filter state must be (x, theta)");
  obs.validate(n + m);

  // 1. sigma points of the previous analysis, x integrated with theta held.
  const Ensemble sigma = sigma_ensemble(state.belief);
  Matrix x = sigma.members.topRows(n);
  const Matrix theta_a = sigma.members.bottomRows(m);
  const Index lost = advance_members(model, cfg, x, theta_a);
  if (lost < 0) throw FilterDivergenceError("every forecast member diverged", 0);
  d.diverged_members += lost;

  // 2. nonparametric forecast of the parameter density.
  Vector c = np.shift.A * state.coeffs;
  const SampledDensity pf = density_or_reset(c, np, d.density_resets);

  // 3. mixed prior.
  const Index k = x.cols();
  const Vector x_mean = x.rowwise().mean();
  const Matrix dx = x.colwise() - x_mean;
  const Matrix dtheta = theta_a.colwise() - theta_a.rowwise().mean();
  const DensityMoments mom = density_moments(pf, np.basis, m);
  GaussianBelief prior;
  prior.mean.resize(n + m);
  prior.mean << x_mean, mom.mean;
  prior.cov.resize(n + m, n + m);
  prior.cov.topLeftCorner(n, n) = dx * dx.transpose() / static_cast<double>(k);
  prior.cov.topRightCorner(n, m) = dx * dtheta.transpose() / static_cast<double>(k);
  prior.cov.bottomLeftCorner(m, n) = prior.cov.topRightCorner(n, m).transpose();
  prior.cov.bottomRightCorner(m, m) = mom.covariance;

  // 4. the mixed covariance need not be PSD; repair before resampling.
  try {
    (void)spd_sqrt(prior.cov);
  } catch (const CovarianceError&) {
    prior.cov = psd_repair(prior.cov);
    ++d.psd_repairs;
  }

  // 5. Kalman update on a fresh sigma ensemble.
  const AnalysisResult an = assimilate(prior, obs, yo);
  d.last_innovation = an.innovation;

  // 6. Bayesian update of the density, projected back onto the basis.
  SemiState next;
  next.belief = an.belief;
  try {
    const SampledDensity pa = bayes_update(pf, an.belief.mean.tail(m),
                                           an.belief.cov.bottomRightCorner(m, m), np);
    next.coeffs = project_density(pa, np.basis);
  } catch (const DensityCollapseError&) {
    ++d.density_resets;
    next.coeffs = np.equilibrium_coeffs();
  }
  return next;
}

SemiFilterRun run_filter(const TimeSeries& observations, const SemiState& initial,
                         const ParametricModel& model, const ObservationModel& obs,
                         const NonparametricModel& np, const IntegratorConfig& cfg) {
  SemiFilterRun run;
  run.states.reserve(static_cast<std::size_t>(observations.size()));
  if (observations.size() == 0) {
    run.states.push_back(initial);
    return run;
  }
  DivergenceMonitor monitor(observation_climatology_sd(observations));
  SemiState state = initial;
  for (Index k = 0; k < observations.size(); ++k) {
    const Vector yo = observations.values.row(k).transpose();
    try {
      if (k == 0) {
        const AnalysisResult an = assimilate(state.belief, obs, yo);
        state.belief = an.belief;
        run.diagnostics.last_innovation = an.innovation;
      } else {
        state = semiparametric_filter_step(state, yo, model, obs, np, cfg, &run.diagnostics);
      }
      monitor.observe(run.diagnostics.last_innovation, k);
    } catch (const Error& e) {
      run.failed_at = k;
      run.failure = e.what();
      break;
    }
    run.states.push_back(state);
  }
  return run;
}

}  // namespace semipar
