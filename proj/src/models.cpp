#include "semipar/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace semipar {

namespace {

constexpr Index kL96Dim = 40;
constexpr double kL63Sigma = 10.0;
constexpr double kL63Rho = 28.0;
constexpr double kL63Beta = 8.0 / 3.0;

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0)) {
    throw InvalidParameterError("time-scale epsilon must be positive");
  }
}

// RK4 on x with couplings frozen.
void rk4_l96(Vector& x, const double* coupling, Index blocks, double forcing, double h, Vector& k1,
             Vector& k2, Vector& k3, Vector& k4, Vector& tmp) {
  const Index n = x.size();
  l96_tendency(x.data(), n, coupling, blocks, forcing, k1.data());
  tmp = x + 0.5 * h * k1;
  l96_tendency(tmp.data(), n, coupling, blocks, forcing, k2.data());
  tmp = x + 0.5 * h * k2;
  l96_tendency(tmp.data(), n, coupling, blocks, forcing, k3.data());
  tmp = x + h * k3;
  l96_tendency(tmp.data(), n, coupling, blocks, forcing, k4.data());
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(h > 0.0) || substeps < 1) {
    throw InvalidParameterError("integrator needs h > 0 and at least one substep");
  }
}

bool is_diverged(const Vector& z) {
  for (Index i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z(i)) || std::abs(z(i)) > kDivergenceThreshold) return true;
  }
  return false;
}

void l96_tendency(const double* x, Index n, const double* coupling, Index blocks, double forcing,
                  double* dx) {
  const Index block_size = blocks > 0 ? n / blocks : n;
  for (Index i = 0; i < n; ++i) {
    const double xm1 = x[(i + n - 1) % n];
    const double xm2 = x[(i + n - 2) % n];
    const double xp1 = x[(i + 1) % n];
    const double c = blocks > 0 ? coupling[std::min(i / block_size, blocks - 1)] : 1.0;
    dx[i] = c * xm1 * xp1 - xm1 * xm2 - x[i] + forcing;
  }
}

Vector lorenz96_rhs(const Vector& x, double forcing) {
  if (x.size() < 4) throw InvalidDimensionError("Lorenz-96 needs at least 4 variables");
  Vector dx(x.size());
  l96_tendency(x.data(), x.size(), nullptr, 0, forcing, dx.data());
  return dx;
}

double l96l63_theta(double a1) { return a1 / 40.0 + 1.0; }

Vector l96l63_rhs(const Vector& z, double epsilon) {
  check_epsilon(epsilon);
  if (z.size() != kL96Dim + 3) throw InvalidDimensionError("L96-L63 state has 43 entries");
  Vector dz(z.size());
  const double theta = l96l63_theta(z(kL96Dim));
  l96_tendency(z.data(), kL96Dim, &theta, 1, 8.0, dz.data());
  const double a1 = z(kL96Dim), a2 = z(kL96Dim + 1), a3 = z(kL96Dim + 2);
  dz(kL96Dim) = kL63Sigma * (a2 - a1) / epsilon;
  dz(kL96Dim + 1) = (kL63Rho * a1 - a2 - a1 * a3) / epsilon;
  dz(kL96Dim + 2) = (a1 * a2 - kL63Beta * a3) / epsilon;
  return dz;
}

Vector l96_stochastic_theta(double gamma) {
  Vector theta(4);
  for (int j = 1; j <= 4; ++j) {
    theta(j - 1) = 1.0 + 0.3 * std::sin(gamma + std::numbers::pi / 4.0 * j);
  }
  return theta;
}

double l96_stochastic_drift(double gamma, double epsilon) {
  check_epsilon(epsilon);
  return -(2.0 - std::sin(2.0 * gamma) / 2.0) / epsilon;
}

double l96_stochastic_noise(double epsilon) {
  check_epsilon(epsilon);
  return std::sqrt(0.1 / epsilon);
}

Vector l96_stochastic_step(const Vector& z, double epsilon, double h, double noise) {
  check_epsilon(epsilon);
  if (!(h > 0.0)) throw InvalidParameterError("step size must be positive");
  if (z.size() != kL96Dim + 1) throw InvalidDimensionError("L96-stochastic state has 41 entries");
  const double gamma = z(kL96Dim);
  const Vector theta = l96_stochastic_theta(gamma);
  Vector x = z.head(kL96Dim);
  Vector k1(kL96Dim), k2(kL96Dim), k3(kL96Dim), k4(kL96Dim), tmp(kL96Dim);
  rk4_l96(x, theta.data(), 4, 6.0, h, k1, k2, k3, k4, tmp);
  Vector out(z.size());
  out.head(kL96Dim) = x;
  out(kL96Dim) = gamma + l96_stochastic_drift(gamma, epsilon) * h +
                 l96_stochastic_noise(epsilon) * std::sqrt(h) * noise;
  return out;
}

void Dynamics::advance(Vector& z, const IntegratorConfig& cfg, Rng* rng) const {
  for (int s = 0; s < cfg.substeps; ++s) {
    step(z, cfg.h, rng);
    if (is_diverged(z)) throw DivergenceError("trajectory diverged", 0);
  }
}

void OdeDynamics::step(Vector& z, double h, Rng*) const {
  Vector k1(dim_), k2(dim_), k3(dim_), k4(dim_);
  rhs_(z, k1);
  rhs_(z + 0.5 * h * k1, k2);
  rhs_(z + 0.5 * h * k2, k3);
  rhs_(z + h * k3, k4);
  z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

SdeDynamics::SdeDynamics(Index dim, Drift drift, Vector diffusion)
    : dim_(dim), drift_(std::move(drift)), diffusion_(std::move(diffusion)) {
  if (diffusion_.size() != dim_ || (diffusion_.array() < 0.0).any()) {
    throw InvalidParameterError("diffusion amplitudes must be nonnegative, one per component");
  }
}

void SdeDynamics::step(Vector& z, double h, Rng* rng) const {
  if (rng == nullptr) throw InvalidParameterError("stochastic dynamics need a random stream");
  Vector drift(dim_);
  drift_(z, drift);
  const Vector dw = standard_normal(dim_, *rng) * std::sqrt(h);
  z += h * drift + diffusion_.cwiseProduct(dw);
}

DrivenL96::DrivenL96(Index n, double forcing, CouplingMap coupling, LatentDrift drift, double noise)
    : n_(n), forcing_(forcing), coupling_(std::move(coupling)), drift_(std::move(drift)),
      noise_(noise) {
  if (n_ < 4) throw InvalidDimensionError("Lorenz-96 needs at least 4 variables");
  if (noise_ < 0.0) throw InvalidParameterError("noise amplitude must be nonnegative");
}

void DrivenL96::step(Vector& z, double h, Rng* rng) const {
  const double latent = z(n_);
  const Vector c = coupling_(latent);
  Vector x = z.head(n_);
  Vector k1(n_), k2(n_), k3(n_), k4(n_), tmp(n_);
  rk4_l96(x, c.data(), c.size(), forcing_, h, k1, k2, k3, k4, tmp);
  z.head(n_) = x;
  double next = latent + drift_(latent) * h;
  if (noise_ > 0.0) {
    if (rng == nullptr) throw InvalidParameterError("stochastic dynamics need a random stream");
    std::normal_distribution<double> normal;
    next += noise_ * std::sqrt(h) * normal(*rng);
  }
  z(n_) = next;
}

std::shared_ptr<const Dynamics> make_lorenz96(Index n, double forcing) {
  if (n < 4) throw InvalidDimensionError("Lorenz-96 needs at least 4 variables");
  return std::make_shared<OdeDynamics>(n, [n, forcing](const Vector& x, Vector& dx) {
    l96_tendency(x.data(), n, nullptr, 0, forcing, dx.data());
  });
}

std::shared_ptr<const Dynamics> make_l96l63(double epsilon) {
  check_epsilon(epsilon);
  return std::make_shared<OdeDynamics>(kL96Dim + 3, [epsilon](const Vector& z, Vector& dz) {
    dz = l96l63_rhs(z, epsilon);
  });
}

std::shared_ptr<const DrivenL96> make_l96_stochastic(double epsilon) {
  check_epsilon(epsilon);
  return std::make_shared<DrivenL96>(
      kL96Dim, 6.0, [](double g) { return l96_stochastic_theta(g); },
      [epsilon](double g) { return l96_stochastic_drift(g, epsilon); },
      l96_stochastic_noise(epsilon));
}

std::shared_ptr<const DrivenL96> make_ou_toy(double epsilon) {
  check_epsilon(epsilon);
  // Stationary variance sigma^2 / (2 rate) = 0.01.
  const double rate = 1.0 / epsilon;
  const double sigma = std::sqrt(2.0 * rate * 0.01);
  return std::make_shared<DrivenL96>(
      kL96Dim, 8.0, [](double u) { return Vector::Constant(1, 1.0 + u); },
      [rate](double u) { return -rate * u; }, sigma);
}

std::shared_ptr<const Dynamics> make_ornstein_uhlenbeck(const Vector& rate, const Vector& mean,
                                                        const Vector& sigma) {
  if (rate.size() != mean.size() || rate.size() != sigma.size()) {
    throw DimensionMismatchError("OU parameters must share one dimension");
  }
  return std::make_shared<SdeDynamics>(
      rate.size(),
      [rate, mean](const Vector& z, Vector& dz) { dz = rate.cwiseProduct(mean - z); }, sigma);
}

TimeSeries integrate(const Dynamics& dynamics, const Vector& z0, const IntegratorConfig& cfg,
                     Index n_steps, Rng* rng) {
  cfg.validate();
  if (z0.size() != dynamics.dim()) {
    throw DimensionMismatchError("initial state does not match the system dimension");
  }
  if (n_steps < 0) throw InvalidParameterError("negative step count");
  TimeSeries out;
  out.tau = cfg.tau();
  out.values.resize(n_steps + 1, z0.size());
  out.values.row(0) = z0.transpose();
  Vector z = z0;
  for (Index s = 1; s <= n_steps; ++s) {
    try {
      dynamics.advance(z, cfg, rng);
    } catch (const DivergenceError&) {
      std::ostringstream msg;
      msg << "trajectory diverged at sample " << s;
      throw DivergenceError(msg.str(), s);
    }
    out.values.row(s) = z.transpose();
  }
  return out;
}

ParametricModel::ParametricModel(Index state_dim, Index param_dim, double forcing)
    : n_(state_dim), m_(param_dim), forcing_(forcing) {
  if (n_ < 4) throw InvalidDimensionError("Lorenz-96 needs at least 4 variables");
  if (m_ < 1 || n_ % m_ != 0) {
    throw InvalidDimensionError("parameter count must divide the state dimension");
  }
}

bool ParametricModel::advance(Vector& x, const Vector& theta, const IntegratorConfig& cfg) const {
  Vector k1(n_), k2(n_), k3(n_), k4(n_), tmp(n_);
  for (int s = 0; s < cfg.substeps; ++s) {
    rk4_l96(x, theta.data(), m_, forcing_, cfg.h, k1, k2, k3, k4, tmp);
    if (is_diverged(x)) return false;
  }
  return true;
}

}  // namespace semipar
