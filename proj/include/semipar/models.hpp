#pragma once

#include <functional>
#include <memory>

#include "semipar/common.hpp"

namespace semipar {

/// |z_i| above this (or a non-finite entry) declares a trajectory divergent.
inline constexpr double kDivergenceThreshold = 1e6;

struct IntegratorConfig {
  double h = 0.01;    // internal step
  int substeps = 10;  // internal steps per sample interval

  double tau() const { return h * substeps; }
  void validate() const;
};

bool is_diverged(const Vector& z);

// Generalised Lorenz-96 tendency
//   dx_i = c_{b(i)} x_{i-1} x_{i+1} - x_{i-1} x_{i-2} - x_i + F,
// with indices cyclic and x split into `blocks` equal blocks, block b(i) = i / (n / blocks).
// blocks == 0 means every coupling is 1.
void l96_tendency(const double* x, Index n, const double* coupling, Index blocks, double forcing,
                  double* dx);

Vector lorenz96_rhs(const Vector& x, double forcing);

/// L96 state (40) coupled to a Lorenz-63 latent (3) through theta = a1/40 + 1.
Vector l96l63_rhs(const Vector& z, double epsilon);
double l96l63_theta(double a1);

/// Four block couplings 1 + 0.3 sin(gamma + pi j / 4), j = 1..4.
Vector l96_stochastic_theta(double gamma);
double l96_stochastic_drift(double gamma, double epsilon);
double l96_stochastic_noise(double epsilon);
/// One internal step of the L96-stochastic system (x: 40, gamma: 1). `noise` is a
/// standard normal draw; x advances by RK4 with theta frozen, gamma by Euler-Maruyama.
Vector l96_stochastic_step(const Vector& z, double epsilon, double h, double noise);

/// Time-homogeneous dynamics advanced in fixed internal steps.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual Index dim() const = 0;
  virtual bool stochastic() const = 0;
  virtual void step(Vector& z, double h, Rng* rng) const = 0;

  /// Advance one sample interval. Throws DivergenceError (step 0) on blow-up.
  void advance(Vector& z, const IntegratorConfig& cfg, Rng* rng) const;
};

/// dz/dt = rhs(z), classical RK4.
class OdeDynamics final : public Dynamics {
 public:
  using Rhs = std::function<void(const Vector&, Vector&)>;
  OdeDynamics(Index dim, Rhs rhs) : dim_(dim), rhs_(std::move(rhs)) {}
  Index dim() const override { return dim_; }
  bool stochastic() const override { return false; }
  void step(Vector& z, double h, Rng* rng) const override;

 private:
  Index dim_;
  Rhs rhs_;
};

/// dz = drift(z) dt + diag(diffusion) dW, Euler-Maruyama.
class SdeDynamics final : public Dynamics {
 public:
  using Drift = std::function<void(const Vector&, Vector&)>;
  SdeDynamics(Index dim, Drift drift, Vector diffusion);
  Index dim() const override { return dim_; }
  bool stochastic() const override { return true; }
  void step(Vector& z, double h, Rng* rng) const override;

 private:
  Index dim_;
  Drift drift_;
  Vector diffusion_;
};

/// L96 whose couplings are a function of a scalar latent process
///   d gamma = drift(gamma) dt + noise dW.
/// x advances by RK4 with the couplings frozen over each internal step.
class DrivenL96 final : public Dynamics {
 public:
  using CouplingMap = std::function<Vector(double)>;
  using LatentDrift = std::function<double(double)>;
  DrivenL96(Index n, double forcing, CouplingMap coupling, LatentDrift drift, double noise);
  Index dim() const override { return n_ + 1; }
  bool stochastic() const override { return noise_ > 0.0; }
  void step(Vector& z, double h, Rng* rng) const override;
  Vector coupling(double latent) const { return coupling_(latent); }

 private:
  Index n_;
  double forcing_;
  CouplingMap coupling_;
  LatentDrift drift_;
  double noise_;
};

std::shared_ptr<const Dynamics> make_lorenz96(Index n, double forcing);
std::shared_ptr<const Dynamics> make_l96l63(double epsilon);
std::shared_ptr<const DrivenL96> make_l96_stochastic(double epsilon);
/// 40-variable L96 with coupling 1 + u, u an OU process of variance 0.01 and rate 1/epsilon.
std::shared_ptr<const DrivenL96> make_ou_toy(double epsilon);
/// Componentwise d theta = rate (mean - theta) dt + sigma dW.
std::shared_ptr<const Dynamics> make_ornstein_uhlenbeck(const Vector& rate, const Vector& mean,
                                                        const Vector& sigma);

/// n_steps + 1 samples at the observation interval starting from z0.
/// Throws DivergenceError carrying the failing sample index.
TimeSeries integrate(const Dynamics& dynamics, const Vector& z0, const IntegratorConfig& cfg,
                     Index n_steps, Rng* rng = nullptr);

/// The parametric model f(x, theta): L96 with blockwise couplings theta held fixed
/// across an integration interval.
class ParametricModel {
 public:
  ParametricModel(Index state_dim, Index param_dim, double forcing);

  Index state_dim() const { return n_; }
  Index param_dim() const { return m_; }
  double forcing() const { return forcing_; }

  /// Advance x by one sample interval; returns false if x diverged.
  bool advance(Vector& x, const Vector& theta, const IntegratorConfig& cfg) const;

 private:
  Index n_;
  Index m_;
  double forcing_;
};

/// Mean stochastic model: componentwise OU fit d theta = alpha (mean - theta) dt + sigma dW.
struct MsmFit {
  Vector mean;
  Vector variance;
  Vector alpha;
  Vector sigma;
  Vector correlation_time;
  std::vector<bool> capped;  // alpha hit the [1e-6, 1e3] clamp

  Vector forecast_mean(const Vector& theta0, double lead) const;
  Vector forecast_variance(const Vector& var0, double lead) const;
};

MsmFit msm_fit(const TimeSeries& series);

}  // namespace semipar
