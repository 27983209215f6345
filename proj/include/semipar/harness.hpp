#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "semipar/adaptive_noise.hpp"
#include "semipar/semiparametric.hpp"

namespace semipar {

struct ExperimentConfig {
  std::string system = "l96l63";  // l96l63 | l96stochastic | ou-toy
  double epsilon = 1.0;
  double tau = 0.1;
  double h = 0.01;
  Index spinup = 500;
  Index training_length = 5000;
  Index eval_start = 5101;  // first evaluation observation
  Index eval_count = 1000;
  Index horizon = 50;
  Index initial_conditions = 100;
  Index ic_spacing = 50;
  Index lags = -1;  // -1: 4 for l96l63, 1 for l96stochastic, 0 for ou-toy
  Index basis_size = 100;
  double obs_variance = 0.125;
  double perturbation = 0.001;  // fraction of the long-term variance
  Index forecast_stride = 10;
  Index climatology_steps = 10000;
  std::uint64_t seed = 1;
  std::vector<std::string> methods = {"perfect", "semiparametric", "hmm",
                                      "msm",     "persistence",    "l96"};
  bool full_scale = false;
  bool perfect_data = true;  // forecast experiment trains on the true parameter series

  void validate() const;
  Index resolved_lags() const;
  IntegratorConfig integrator() const;
  /// 1000 initial conditions, forecasts from every analysis.
  void apply_full_scale();
  bool has_method(const std::string& name) const;

  /// Recognised keys are the field names above; `methods` is comma separated.
  static ExperimentConfig from_map(const std::map<std::string, std::string>& values);
};

std::vector<std::string> split_methods(const std::string& text);

/// Truth system of a twin experiment: x (n = 40) followed by latent variables.
struct TwinSystem {
  std::string name;
  double epsilon = 1.0;
  Index n = 40;
  Index m = 1;
  double forcing = 8.0;
  std::shared_ptr<const Dynamics> truth;
  std::function<Vector(const Vector& latent)> theta_of_latent;
  // Latent state consistent with a parameter estimate; `reference` supplies
  // whatever theta does not determine.
  std::function<Vector(const Vector& theta, const Vector& reference)> latent_from_theta;
  std::function<Vector(Rng&)> initial_state;
  // Variance scale of the latent variables for initial perturbations; empty
  // means use the sample variance.
  Vector latent_variance_override;

  Index latent_dim() const { return truth->dim() - n; }
  Vector theta_of(const Vector& z) const { return theta_of_latent(z.tail(latent_dim())); }
  ParametricModel parametric() const { return ParametricModel(n, m, forcing); }
};

TwinSystem make_system(const std::string& name, double epsilon);

struct TwinData {
  TimeSeries truth;         // full state
  TimeSeries theta;         // true parameters
  TimeSeries observations;  // x + N(0, R)
};

/// Spin-up, then `steps` further intervals. Observations use stream (seed, 2).
TwinData simulate_twin(const TwinSystem& sys, const ExperimentConfig& cfg, Index steps);

struct Climatology {
  double error = 0.0;  // sqrt of the mean x variance
  Vector variance;     // per state coordinate (x then latent)
  Vector theta_variance;
};

Climatology climatology(const TwinSystem& sys, const ExperimentConfig& cfg, const Vector& z0);

struct SkillTable {
  std::vector<std::string> methods;
  double tau = 0.1;
  Matrix rmse;  // methods x (H + 1)
  std::vector<Index> capped;            // forecasts replaced by the climatological error
  std::vector<Index> member_divergences;
  std::vector<Index> density_resets;
  double climatology = 0.0;
  Index initial_conditions = 0;
  std::map<std::string, double> analysis_rmse;
  std::map<std::string, std::string> failures;

  Index horizon() const { return rmse.cols() - 1; }
  Index method_index(const std::string& name) const;
  double at(const std::string& method, Index lead) const;
};

/// Adds one forecast's per-lead errors to row `method` of `sums`. Leads past a
/// divergence score the climatological error and the forecast counts as capped.
void score_forecast(SkillTable& table, Index method, const ForecastResult& fr,
                    const RowMatrix& truth_x, Matrix& sums);

/// Paired-initial-condition forecast comparison of every configured method.
SkillTable run_forecast_experiment(const ExperimentConfig& cfg);

struct ParameterRecovery {
  NoiseEstimate noise;
  Matrix q_theta;            // theta block of Qhat
  TimeSeries recovered;      // analysis (x, theta)
  TimeSeries theta;          // recovered theta only
  Vector correlation;        // per component against the truth
  double mean_correlation = 0.0;
};

/// Adaptive Q on the first training_length observations.
NoiseEstimate estimate_noise(const TwinSystem& sys, const TwinData& data,
                             const ExperimentConfig& cfg);

/// Theta extraction with a given noise estimate (estimated first when null).
ParameterRecovery recover_parameters(const TwinSystem& sys, const TwinData& data,
                                     const ExperimentConfig& cfg,
                                     const NoiseEstimate* noise = nullptr);

/// Steps simulated by the filter experiment (training, evaluation and horizon).
Index filter_experiment_steps(const ExperimentConfig& cfg);

struct FilterExperiment {
  SkillTable table;
  ParameterRecovery recovery;
  SemiDiagnostics semi_diagnostics;
};

/// Full pipeline: noise estimation, extraction, training, filtering of the
/// evaluation window and forecasts from the filter analyses.
FilterExperiment run_filter_experiment(const ExperimentConfig& cfg);

}  // namespace semipar
