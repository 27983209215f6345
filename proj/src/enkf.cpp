#include "semipar/enkf.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "semipar/kernels.hpp"

namespace semipar {

namespace {

constexpr double kJitter = 1e-10;
constexpr double kNegativeTolerance = 1e-10;

Matrix symmetrized(const Matrix& c) { return 0.5 * (c + c.transpose()); }

}  // namespace

void ObservationModel::validate(Index state_dim) const {
  if (H.cols() != state_dim) throw DimensionMismatchError("observation operator width mismatch");
  if (R.rows() != H.rows() || R.cols() != H.rows()) {
    throw DimensionMismatchError("observation covariance size mismatch");
  }
}

ObservationModel observe_leading(Index n, Index state_dim, double noise_variance) {
  if (n > state_dim) throw InvalidDimensionError("cannot observe more entries than the state has");
  if (!(noise_variance > 0.0)) throw InvalidParameterError("observation noise must be positive");
  ObservationModel obs;
  obs.H = Matrix::Zero(n, state_dim);
  obs.H.leftCols(n).setIdentity();
  obs.R = noise_variance * Matrix::Identity(n, n);
  return obs;
}

Matrix spd_sqrt(const Matrix& c) {
  if (c.rows() != c.cols()) throw InvalidDimensionError("covariance must be square");
  if (!c.allFinite()) throw CovarianceError("covariance has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(c));
  if (eig.info() != Eigen::Success) throw CovarianceError("eigendecomposition failed");
  Vector values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -kNegativeTolerance * scale) {
    std::ostringstream msg;
    msg << "covariance is not positive semidefinite (min eigenvalue " << values.minCoeff() << ")";
    throw CovarianceError(msg.str());
  }
  values = values.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix psd_repair(const Matrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(c));
  if (eig.info() != Eigen::Success) throw CovarianceError("eigendecomposition failed");
  const Vector values = eig.eigenvalues().cwiseMax(0.0);
  return symmetrized(eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose());
}

Matrix project_spd(const Matrix& q) {
  if (q.rows() != q.cols()) throw InvalidDimensionError("noise covariance must be square");
  Eigen::JacobiSVD<Matrix> svd(q, Eigen::ComputeFullU);
  const Matrix& u = svd.matrixU();
  return symmetrized(u * svd.singularValues().asDiagonal() * u.transpose());
}

Ensemble sigma_ensemble(const GaussianBelief& belief) {
  const Index d = belief.dim();
  if (d < 1) throw InvalidDimensionError("empty belief");
  if (belief.cov.rows() != d || belief.cov.cols() != d) {
    throw DimensionMismatchError("covariance does not match the mean");
  }
  const Matrix root = spd_sqrt(belief.cov) * std::sqrt(static_cast<double>(d));
  Ensemble out;
  out.members.resize(d, 2 * d);
  out.members.leftCols(d) = root.colwise() + belief.mean;
  out.members.rightCols(d) = (-root).colwise() + belief.mean;
  return out;
}

GaussianBelief ensemble_moments(const Matrix& members) {
  const Index k = members.cols();
  if (k < 2) throw InvalidParameterError("ensemble needs at least two members");
  GaussianBelief out;
  out.mean = members.rowwise().mean();
  const Matrix dev = members.colwise() - out.mean;
  out.cov = symmetrized(dev * dev.transpose() / static_cast<double>(k));
  return out;
}

AnalysisResult enkf_analysis(const Matrix& zf, const Matrix& yf, const Vector& yo,
                             const Matrix& R) {
  const Index k = zf.cols();
  if (yf.cols() != k) throw DimensionMismatchError("state and observation ensembles differ in size");
  if (yo.size() != yf.rows() || R.rows() != yo.size() || R.cols() != yo.size()) {
    throw DimensionMismatchError("observation dimension mismatch");
  }
  if (k < 2) throw InvalidParameterError("ensemble needs at least two members");
  const double inv_k = 1.0 / static_cast<double>(k);
  const Vector z_mean = zf.rowwise().mean();
  const Vector y_mean = yf.rowwise().mean();
  const Matrix dz = zf.colwise() - z_mean;
  const Matrix dy = yf.colwise() - y_mean;
  const Matrix czz = dz * dz.transpose() * inv_k;
  const Matrix czy = dz * dy.transpose() * inv_k;
  Matrix cyy = symmetrized(dy * dy.transpose() * inv_k + R);

  AnalysisResult out;
  out.innovation_cov = cyy;
  cyy.diagonal().array() += kJitter;
  Eigen::LLT<Matrix> llt(cyy);
  if (llt.info() != Eigen::Success) throw NumericError("innovation covariance is singular");
  out.gain = llt.solve(czy.transpose()).transpose();
  out.innovation = yo - y_mean;
  out.belief.mean = z_mean + out.gain * out.innovation;
  out.belief.cov = symmetrized(czz - out.gain * out.innovation_cov * out.gain.transpose());
  return out;
}

AnalysisResult assimilate(const GaussianBelief& prior, const ObservationModel& obs,
                          const Vector& yo) {
  obs.validate(prior.dim());
  Ensemble sigma = sigma_ensemble(prior);
  const Matrix yf = obs.H * sigma.members;
  return enkf_analysis(sigma.members, yf, yo, obs.R);
}

ForecastStep ensemble_forecast(const GaussianBelief& analysis, const Propagator& propagate,
                               std::uint64_t seed, Index step) {
  ForecastStep out;
  out.initial = sigma_ensemble(analysis).members;
  out.members = out.initial;
  const Index k = out.members.cols();
  std::vector<char> ok(static_cast<std::size_t>(k), 1);
  kernels::for_each_index(k, [&](Index j) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(step * k + j));
    Vector z = out.members.col(j);
    ok[static_cast<std::size_t>(j)] = propagate(z, j, rng) ? 1 : 0;
    out.members.col(j) = z;
  });
  Vector sum = Vector::Zero(out.members.rows());
  Index alive = 0;
  for (Index j = 0; j < k; ++j) {
    if (ok[static_cast<std::size_t>(j)]) {
      sum += out.members.col(j);
      ++alive;
    }
  }
  if (alive == 0) throw FilterDivergenceError("every ensemble member diverged", step);
  const Vector mean = sum / static_cast<double>(alive);
  for (Index j = 0; j < k; ++j) {
    if (!ok[static_cast<std::size_t>(j)]) {
      out.members.col(j) = mean;
      ++out.diverged;
    }
  }
  out.moments = ensemble_moments(out.members);
  return out;
}

DivergenceMonitor::DivergenceMonitor(double climatological_sd, double factor, Index window)
    : threshold_(factor * climatological_sd), window_(window) {}

void DivergenceMonitor::observe(const Vector& innovation, Index step) {
  const double rms = std::sqrt(innovation.squaredNorm() / static_cast<double>(innovation.size()));
  if (!std::isfinite(rms) || rms > threshold_) {
    if (++run_ >= window_) {
      std::ostringstream msg;
      msg << "filter innovations exceeded " << threshold_ << " for " << window_
          << " consecutive steps";
      throw FilterDivergenceError(msg.str(), step);
    }
  } else {
    run_ = 0;
  }
}

Propagator augmented_propagator(const ParametricModel& model, const IntegratorConfig& cfg) {
  const Index n = model.state_dim();
  const Index m = model.param_dim();
  return [model, cfg, n, m](Vector& z, Index, Rng&) {
    Vector x = z.head(n);
    const Vector theta = z.segment(n, m);
    const bool ok = model.advance(x, theta, cfg);
    z.head(n) = x;
    return ok;
  };
}

Matrix embed_theta_block(const Matrix& q_theta, Index n) {
  const Index m = q_theta.rows();
  Matrix q = Matrix::Zero(n + m, n + m);
  q.bottomRightCorner(m, m) = q_theta;
  return q;
}

double observation_climatology_sd(const TimeSeries& observations) {
  const RowMatrix centered = observations.values.rowwise() - observations.values.colwise().mean();
  return std::sqrt(centered.squaredNorm() / static_cast<double>(centered.size()));
}

TimeSeries extract_theta_series(const TimeSeries& observations, const ParametricModel& model,
                                const ObservationModel& obs, const Matrix& Q,
                                const GaussianBelief& initial, const AugmentedFilterConfig& cfg) {
  const Index d = model.state_dim() + model.param_dim();
  obs.validate(d);
  if (initial.dim() != d) throw DimensionMismatchError("initial belief must cover (x, theta)");
  if (Q.rows() != d || Q.cols() != d) throw DimensionMismatchError("Q must be (n + m) square");
  if (observations.dim() != obs.obs_dim()) throw DimensionMismatchError("observation width mismatch");
  const Propagator propagate = augmented_propagator(model, cfg.integrator);
  DivergenceMonitor monitor(observation_climatology_sd(observations));

  TimeSeries out;
  out.tau = observations.tau;
  out.t0 = observations.t0;
  out.values.resize(observations.size(), d);
  GaussianBelief prior = initial;
  for (Index k = 0; k < observations.size(); ++k) {
    if (k > 0) {
      ForecastStep fc = ensemble_forecast(prior, propagate, cfg.seed, k);
      prior = fc.moments;
      prior.cov += Q * observations.tau;
    }
    const AnalysisResult an = assimilate(prior, obs, observations.values.row(k).transpose());
    monitor.observe(an.innovation, k);
    prior = an.belief;
    out.values.row(k) = prior.mean.transpose();
  }
  return out;
}

}  // namespace semipar
