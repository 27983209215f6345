#include "semipar/baselines.hpp"

#include <limits>

#include "semipar/kernels.hpp"

namespace semipar {

namespace {

ForecastResult start_record(const Matrix& x_ensemble, Index horizon, Index m) {
  if (horizon < 0) throw InvalidParameterError("negative forecast horizon");
  if (x_ensemble.cols() < 1) throw InvalidParameterError("empty ensemble");
  ForecastResult out;
  out.x_mean.resize(horizon + 1, x_ensemble.rows());
  out.x_mean.row(0) = x_ensemble.rowwise().mean().transpose();
  if (m > 0) {
    out.theta_mean.resize(horizon + 1, m);
    out.theta_var = Matrix::Zero(horizon + 1, m);
  }
  return out;
}

void mark_diverged(ForecastResult& out, Index lead) {
  out.diverged_at = lead;
  out.x_mean.bottomRows(out.x_mean.rows() - lead).setConstant(std::numeric_limits<double>::quiet_NaN());
}

// Replaces dead columns by the survivor mean; -1 if nobody survived.
Index repair_members(Matrix& z, const std::vector<char>& ok) {
  Vector sum = Vector::Zero(z.rows());
  Index alive = 0;
  for (Index k = 0; k < z.cols(); ++k) {
    if (ok[static_cast<std::size_t>(k)]) {
      sum += z.col(k);
      ++alive;
    }
  }
  if (alive == 0) return -1;
  const Vector mean = sum / static_cast<double>(alive);
  for (Index k = 0; k < z.cols(); ++k) {
    if (!ok[static_cast<std::size_t>(k)]) z.col(k) = mean;
  }
  return z.cols() - alive;
}

}  // namespace

Index advance_members(const ParametricModel& model, const IntegratorConfig& cfg, Matrix& x,
                      const Matrix& theta) {
  const Index k = x.cols();
  if (theta.cols() != k || theta.rows() != model.param_dim()) {
    throw DimensionMismatchError("one parameter vector per member required");
  }
  std::vector<char> ok(static_cast<std::size_t>(k), 1);
  kernels::for_each_index(k, [&](Index j) {
    Vector xj = x.col(j);
    ok[static_cast<std::size_t>(j)] = model.advance(xj, theta.col(j), cfg) ? 1 : 0;
    x.col(j) = xj;
  });
  return repair_members(x, ok);
}

ForecastResult persistence_forecast(const Matrix& x_ensemble, const Vector& theta,
                                    const ParametricModel& model, Index horizon,
                                    const IntegratorConfig& cfg) {
  ForecastResult out = start_record(x_ensemble, horizon, theta.size());
  Matrix x = x_ensemble;
  const Matrix thetas = theta.replicate(1, x.cols());
  for (Index l = 0; l <= horizon; ++l) {
    out.theta_mean.row(l) = theta.transpose();
    if (l == 0) continue;
    const Index lost = advance_members(model, cfg, x, thetas);
    if (lost < 0) {
      mark_diverged(out, l);
      out.theta_mean.bottomRows(horizon + 1 - l).rowwise() = theta.transpose();
      break;
    }
    out.diverged_members += lost;
    out.x_mean.row(l) = x.rowwise().mean().transpose();
  }
  return out;
}

ForecastResult hmm_forecast(const Matrix& x_ensemble, const RowMatrix& training,
                            const ParametricModel& model, Index horizon, Rng& rng,
                            const IntegratorConfig& cfg) {
  const Index m = model.param_dim();
  if (training.rows() < 1 || training.cols() < m) {
    throw DimensionMismatchError("training set does not carry the model parameters");
  }
  ForecastResult out = start_record(x_ensemble, horizon, m);
  const Vector climate_mean = training.leftCols(m).colwise().mean().transpose();
  const RowMatrix centered = training.leftCols(m).rowwise() - climate_mean.transpose();
  const Vector climate_var =
      centered.colwise().squaredNorm().transpose() / static_cast<double>(training.rows());
  out.theta_mean.rowwise() = climate_mean.transpose();
  out.theta_var.rowwise() = climate_var.transpose();
  Matrix x = x_ensemble;
  Matrix thetas(m, x.cols());
  std::uniform_int_distribution<Index> pick(0, training.rows() - 1);
  for (Index l = 1; l <= horizon; ++l) {
    for (Index k = 0; k < x.cols(); ++k) thetas.col(k) = training.row(pick(rng)).head(m).transpose();
    const Index lost = advance_members(model, cfg, x, thetas);
    if (lost < 0) {
      mark_diverged(out, l);
      break;
    }
    out.diverged_members += lost;
    out.x_mean.row(l) = x.rowwise().mean().transpose();
  }
  return out;
}

ForecastResult msm_forecast(const Matrix& x_ensemble, const Vector& theta, const Vector& theta_var,
                            const MsmFit& fit, const ParametricModel& model, Index horizon,
                            const IntegratorConfig& cfg) {
  const Index m = model.param_dim();
  if (theta.size() != m || theta_var.size() != m || fit.mean.size() != m) {
    throw DimensionMismatchError("MSM forecast parameter dimension mismatch");
  }
  ForecastResult out = start_record(x_ensemble, horizon, m);
  const double tau = cfg.tau();
  for (Index l = 0; l <= horizon; ++l) {
    const double lead = tau * static_cast<double>(l);
    out.theta_mean.row(l) = fit.forecast_mean(theta, lead).transpose();
    out.theta_var.row(l) = fit.forecast_variance(theta_var, lead).transpose();
  }
  Matrix x = x_ensemble;
  for (Index l = 1; l <= horizon; ++l) {
    const Matrix thetas = out.theta_mean.row(l - 1).transpose().replicate(1, x.cols());
    const Index lost = advance_members(model, cfg, x, thetas);
    if (lost < 0) {
      mark_diverged(out, l);
      break;
    }
    out.diverged_members += lost;
    out.x_mean.row(l) = x.rowwise().mean().transpose();
  }
  return out;
}

ForecastResult perfect_forecast(const Matrix& ensemble, const Dynamics& dynamics, Index n,
                                Index horizon, std::uint64_t seed, const IntegratorConfig& cfg) {
  if (ensemble.rows() != dynamics.dim()) throw DimensionMismatchError("ensemble width mismatch");
  if (n > ensemble.rows()) throw InvalidDimensionError("observed block larger than the state");
  ForecastResult out = start_record(ensemble.topRows(n), horizon, 0);
  Matrix z = ensemble;
  const Index k = z.cols();
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) streams.push_back(make_stream(seed, static_cast<std::uint64_t>(j)));
  for (Index l = 1; l <= horizon; ++l) {
    std::vector<char> ok(static_cast<std::size_t>(k), 1);
    kernels::for_each_index(k, [&](Index j) {
      Vector zj = z.col(j);
      try {
        dynamics.advance(zj, cfg, &streams[static_cast<std::size_t>(j)]);
      } catch (const DivergenceError&) {
        ok[static_cast<std::size_t>(j)] = 0;
      }
      z.col(j) = zj;
    });
    const Index lost = repair_members(z, ok);
    if (lost < 0) {
      mark_diverged(out, l);
      break;
    }
    out.diverged_members += lost;
    out.x_mean.row(l) = z.topRows(n).rowwise().mean().transpose();
  }
  return out;
}

}  // namespace semipar
