#include "semipar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "semipar/embedding.hpp"

namespace semipar {

namespace {

const std::set<std::string> kMethods = {"perfect", "semiparametric", "hmm",
                                        "msm",     "persistence",    "l96"};

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T value;
    if constexpr (std::is_same_v<T, double>) {
      value = std::stod(text, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      value = std::stoull(text, &used);
    } else {
      value = static_cast<T>(std::stoll(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

Vector column_variance(const RowMatrix& values) {
  const RowMatrix centered = values.rowwise() - values.colwise().mean();
  return centered.colwise().squaredNorm().transpose() / static_cast<double>(values.rows());
}

TimeSeries slice(const TimeSeries& s, Index start, Index count) {
  TimeSeries out;
  out.values = s.values.middleRows(start, count);
  out.tau = s.tau;
  out.t0 = s.time(start);
  return out;
}

GaussianBelief diagonal_belief(const Vector& mean, const Vector& variance) {
  GaussianBelief b;
  b.mean = mean;
  b.cov = variance.asDiagonal();
  return b;
}

double rms(const Vector& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace

void score_forecast(SkillTable& table, Index method, const ForecastResult& fr, const RowMatrix& truth_x,
           Matrix& sums) {
  const Index horizon = table.horizon();
  bool capped = fr.diverged();
  for (Index l = 0; l <= horizon; ++l) {
    double err = std::numeric_limits<double>::quiet_NaN();
    if (!(fr.diverged() && l >= fr.diverged_at)) {
      err = rms(fr.x_mean.row(l).transpose() - truth_x.row(l).transpose());
    }
    if (!std::isfinite(err)) {
      err = table.climatology;
      capped = true;
    }
    sums(method, l) += err;
  }
  const auto k = static_cast<std::size_t>(method);
  if (capped) ++table.capped[k];
  table.member_divergences[k] += fr.diverged_members;
  table.density_resets[k] += fr.density_resets;
}

namespace {

SkillTable empty_table(const ExperimentConfig& cfg, double climatology) {
  SkillTable table;
  table.methods = cfg.methods;
  table.tau = cfg.tau;
  const auto count = static_cast<Index>(cfg.methods.size());
  table.rmse = Matrix::Zero(count, cfg.horizon + 1);
  table.capped.assign(cfg.methods.size(), 0);
  table.member_divergences.assign(cfg.methods.size(), 0);
  table.density_resets.assign(cfg.methods.size(), 0);
  table.climatology = climatology;
  return table;
}

GeometryConfig geometry_config(const ExperimentConfig& cfg) {
  GeometryConfig g;
  g.basis_size = cfg.basis_size;
  return g;
}

struct VariantRun {
  std::vector<GaussianBelief> analyses;
  Index failed_at = -1;
  std::string failure;
};

VariantRun run_variant(const TimeSeries& observations, const ObservationModel& obs,
                       const Propagator& propagate, const Matrix& q, const GaussianBelief& initial,
                       std::uint64_t seed) {
  VariantRun run;
  DivergenceMonitor monitor(observation_climatology_sd(observations));
  GaussianBelief prior = initial;
  for (Index k = 0; k < observations.size(); ++k) {
    try {
      if (k > 0) {
        const ForecastStep fc = ensemble_forecast(prior, propagate, seed, k);
        prior = fc.moments;
        prior.cov += q;
      }
      const AnalysisResult an = assimilate(prior, obs, observations.values.row(k).transpose());
      monitor.observe(an.innovation, k);
      prior = an.belief;
    } catch (const Error& e) {
      run.failed_at = k;
      run.failure = e.what();
      break;
    }
    run.analyses.push_back(prior);
  }
  return run;
}

Matrix x_sigma(const GaussianBelief& b, Index n) {
  GaussianBelief x;
  x.mean = b.mean.head(n);
  x.cov = b.cov.topLeftCorner(n, n);
  return sigma_ensemble(x).members;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (system != "l96l63" && system != "l96stochastic" && system != "ou-toy") {
    throw ConfigError("unknown system '" + system + "'");
  }
  if (!(epsilon > 0.0) || !(tau > 0.0) || !(h > 0.0)) {
    throw ConfigError("epsilon, tau and h must be positive");
  }
  const double ratio = tau / h;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
    throw ConfigError("h must divide tau exactly");
  }
  if (spinup < 0 || training_length < 100 || eval_count < 1 || horizon < 0 ||
      initial_conditions < 1 || ic_spacing < 1 || basis_size < 1 || forecast_stride < 1 ||
      climatology_steps < 2 || eval_start < 0) {
    throw ConfigError("experiment sizes must be positive (training_length >= 100)");
  }
  if (!(obs_variance > 0.0) || !(perturbation >= 0.0)) {
    throw ConfigError("obs_variance must be positive and perturbation nonnegative");
  }
  if (methods.empty()) throw ConfigError("method list is empty");
  for (const auto& m : methods) {
    if (!kMethods.count(m)) throw ConfigError("unknown method '" + m + "'");
  }
  if (resolved_lags() < 0) throw ConfigError("lags must be nonnegative");
}

Index ExperimentConfig::resolved_lags() const {
  if (lags >= 0) return lags;
  if (system == "l96l63") return 4;
  if (system == "l96stochastic") return 1;
  return 0;
}

IntegratorConfig ExperimentConfig::integrator() const {
  IntegratorConfig c;
  c.h = h;
  c.substeps = static_cast<int>(std::round(tau / h));
  return c;
}

void ExperimentConfig::apply_full_scale() {
  full_scale = true;
  initial_conditions = 1000;
  forecast_stride = 1;
}

bool ExperimentConfig::has_method(const std::string& name) const {
  return std::find(methods.begin(), methods.end(), name) != methods.end();
}

std::vector<std::string> split_methods(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const auto b = item.find_last_not_of(" \t");
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& values) {
  ExperimentConfig c;
  for (const auto& [key, v] : values) {
    if (key == "system") c.system = v;
    else if (key == "epsilon") c.epsilon = parse_number<double>(key, v);
    else if (key == "tau") c.tau = parse_number<double>(key, v);
    else if (key == "h") c.h = parse_number<double>(key, v);
    else if (key == "spinup") c.spinup = parse_number<Index>(key, v);
    else if (key == "training_length") c.training_length = parse_number<Index>(key, v);
    else if (key == "eval_start") c.eval_start = parse_number<Index>(key, v);
    else if (key == "eval_count") c.eval_count = parse_number<Index>(key, v);
    else if (key == "horizon") c.horizon = parse_number<Index>(key, v);
    else if (key == "initial_conditions") c.initial_conditions = parse_number<Index>(key, v);
    else if (key == "ic_spacing") c.ic_spacing = parse_number<Index>(key, v);
    else if (key == "lags") c.lags = parse_number<Index>(key, v);
    else if (key == "basis_size") c.basis_size = parse_number<Index>(key, v);
    else if (key == "obs_variance") c.obs_variance = parse_number<double>(key, v);
    else if (key == "perturbation") c.perturbation = parse_number<double>(key, v);
    else if (key == "forecast_stride") c.forecast_stride = parse_number<Index>(key, v);
    else if (key == "climatology_steps") c.climatology_steps = parse_number<Index>(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "methods") c.methods = split_methods(v);
    else if (key == "full_scale") c.full_scale = parse_bool(key, v);
    else if (key == "perfect_data") c.perfect_data = parse_bool(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (c.full_scale) c.apply_full_scale();
  return c;
}

TwinSystem make_system(const std::string& name, double epsilon) {
  TwinSystem sys;
  sys.name = name;
  sys.epsilon = epsilon;
  if (name == "l96l63") {
    sys.m = 1;
    sys.forcing = 8.0;
    sys.truth = make_l96l63(epsilon);
    sys.theta_of_latent = [](const Vector& a) { return Vector::Constant(1, l96l63_theta(a(0))); };
    sys.latent_from_theta = [](const Vector& theta, const Vector& ref) {
      Vector a = ref;
      a(0) = 40.0 * (theta(0) - 1.0);
      return a;
    };
    sys.initial_state = [](Rng& rng) {
      Vector z(43);
      z.head(40) = Vector::Constant(40, 8.0) + 0.5 * standard_normal(40, rng);
      z.tail(3) << 1.0, 1.0, 20.0;
      z.tail(3) += standard_normal(3, rng);
      return z;
    };
  } else if (name == "l96stochastic") {
    sys.m = 4;
    sys.forcing = 6.0;
    sys.truth = make_l96_stochastic(epsilon);
    sys.theta_of_latent = [](const Vector& g) { return l96_stochastic_theta(g(0)); };
    // theta_2 - 1 = 0.3 cos(gamma), theta_4 - 1 = -0.3 sin(gamma); unwrap next to ref.
    sys.latent_from_theta = [](const Vector& theta, const Vector& ref) {
      const double g = std::atan2(-(theta(3) - 1.0), theta(1) - 1.0);
      return Vector::Constant(1, ref(0) + wrap_angle(g - ref(0)));
    };
    sys.initial_state = [](Rng& rng) {
      Vector z(41);
      z.head(40) = Vector::Constant(40, 6.0) + 0.5 * standard_normal(40, rng);
      z(40) = 0.0;
      return z;
    };
    // gamma winds around the circle; use the variance of a uniform angle.
    sys.latent_variance_override = Vector::Constant(1, std::numbers::pi * std::numbers::pi / 3.0);
  } else if (name == "ou-toy") {
    sys.m = 1;
    sys.forcing = 8.0;
    sys.truth = make_ou_toy(epsilon);
    sys.theta_of_latent = [](const Vector& u) { return Vector::Constant(1, 1.0 + u(0)); };
    sys.latent_from_theta = [](const Vector& theta, const Vector&) {
      return Vector::Constant(1, theta(0) - 1.0);
    };
    sys.initial_state = [](Rng& rng) {
      Vector z(41);
      z.head(40) = Vector::Constant(40, 8.0) + 0.5 * standard_normal(40, rng);
      z(40) = 0.0;
      return z;
    };
  } else {
    throw ConfigError("unknown system '" + name + "'");
  }
  return sys;
}

TwinData simulate_twin(const TwinSystem& sys, const ExperimentConfig& cfg, Index steps) {
  const IntegratorConfig icfg = cfg.integrator();
  Rng rng = make_stream(cfg.seed, 1);
  Vector z0 = sys.initial_state(rng);
  if (cfg.spinup > 0) {
    const TimeSeries spin = integrate(*sys.truth, z0, icfg, cfg.spinup, &rng);
    z0 = spin.values.bottomRows(1).transpose();
  }
  TwinData data;
  data.truth = integrate(*sys.truth, z0, icfg, steps, &rng);
  data.theta.tau = data.truth.tau;
  data.theta.values.resize(data.truth.size(), sys.m);
  for (Index i = 0; i < data.truth.size(); ++i) {
    data.theta.values.row(i) = sys.theta_of(data.truth.values.row(i).transpose()).transpose();
  }
  Rng noise = make_stream(cfg.seed, 2);
  data.observations.tau = data.truth.tau;
  data.observations.values = data.truth.values.leftCols(sys.n);
  const double sd = std::sqrt(cfg.obs_variance);
  for (Index i = 0; i < data.observations.size(); ++i) {
    data.observations.values.row(i) += sd * standard_normal(sys.n, noise).transpose();
  }
  return data;
}

Climatology climatology(const TwinSystem& sys, const ExperimentConfig& cfg, const Vector& z0) {
  Rng rng = make_stream(cfg.seed, 3);
  const TimeSeries run = integrate(*sys.truth, z0, cfg.integrator(), cfg.climatology_steps, &rng);
  Climatology c;
  c.variance = column_variance(run.values);
  if (sys.latent_variance_override.size() == sys.latent_dim()) {
    c.variance.tail(sys.latent_dim()) = sys.latent_variance_override;
  }
  c.error = std::sqrt(c.variance.head(sys.n).mean());
  RowMatrix theta(run.size(), sys.m);
  for (Index i = 0; i < run.size(); ++i) {
    theta.row(i) = sys.theta_of(run.values.row(i).transpose()).transpose();
  }
  c.theta_variance = column_variance(theta);
  return c;
}

Index SkillTable::method_index(const std::string& name) const {
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (methods[i] == name) return static_cast<Index>(i);
  }
  throw ConfigError("method '" + name + "' not in the skill table");
}

double SkillTable::at(const std::string& method, Index lead) const {
  return rmse(method_index(method), lead);
}

SkillTable run_forecast_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const TwinSystem sys = make_system(cfg.system, cfg.epsilon);
  const IntegratorConfig icfg = cfg.integrator();
  const ParametricModel model = sys.parametric();
  const Index n = sys.n;
  const Index m = sys.m;
  const Index lags = cfg.resolved_lags();
  const Index ic_span = cfg.initial_conditions * cfg.ic_spacing;
  const TwinData data = simulate_twin(sys, cfg, cfg.training_length + ic_span + cfg.horizon);
  const Climatology clim = climatology(sys, cfg, data.truth.values.bottomRows(1).transpose());

  const TimeSeries train_theta = slice(data.theta, 0, cfg.training_length);
  NonparametricModel np;
  if (cfg.has_method("semiparametric")) {
    np = train_nonparametric(delay_embed(train_theta, DelayConfig{lags}), m, geometry_config(cfg));
  }
  MsmFit fit;
  if (cfg.has_method("msm")) fit = msm_fit(train_theta);

  const double p = cfg.perturbation;
  const Vector var_x = clim.variance.head(n);
  const Vector var_latent = clim.variance.tail(sys.latent_dim());
  const Vector var_theta = clim.theta_variance;
  const Vector sd_x = (p * var_x).cwiseSqrt();
  const Vector sd_latent = (p * var_latent).cwiseSqrt();
  const Vector sd_theta = (p * var_theta).cwiseSqrt();
  Vector var_embedded(m * (lags + 1));
  for (Index l = 0; l <= lags; ++l) var_embedded.segment(l * m, m) = var_theta;
  const Matrix precision_embedded =
      (p * var_embedded).cwiseMax(1e-300).cwiseInverse().asDiagonal();

  SkillTable table = empty_table(cfg, clim.error);
  table.initial_conditions = cfg.initial_conditions;
  Matrix sums = Matrix::Zero(table.rmse.rows(), table.rmse.cols());

  for (Index ic = 0; ic < cfg.initial_conditions; ++ic) {
    const Index t = cfg.training_length + ic * cfg.ic_spacing;
    Rng rng = make_stream(cfg.seed, 100 + static_cast<std::uint64_t>(ic));
    const Vector z = data.truth.values.row(t).transpose();
    const Vector x_pert = z.head(n) + sd_x.cwiseProduct(standard_normal(n, rng));
    const Vector theta_pert =
        data.theta.values.row(t).transpose() + sd_theta.cwiseProduct(standard_normal(m, rng));
    const Vector latent_ref =
        z.tail(sys.latent_dim()) + sd_latent.cwiseProduct(standard_normal(sys.latent_dim(), rng));
    Vector lagged(m * (lags + 1));
    lagged.head(m) = theta_pert;
    for (Index l = 1; l <= lags; ++l) {
      lagged.segment(l * m, m) = data.theta.values.row(t - l).transpose() +
                                 sd_theta.cwiseProduct(standard_normal(m, rng));
    }
    const std::uint64_t member_seed = rng();

    Vector mean(n + m), var(n + m);
    mean << x_pert, theta_pert;
    var << p * var_x, p * var_theta;
    const Matrix x_ens = sigma_ensemble(diagonal_belief(mean, var)).members.topRows(n);
    const RowMatrix truth_x = data.truth.values.block(t, 0, cfg.horizon + 1, n);

    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
      const std::string& method = cfg.methods[k];
      Rng method_rng = make_stream(member_seed, k);
      ForecastResult fr;
      if (method == "perfect") {
        Vector full(sys.truth->dim()), full_var(sys.truth->dim());
        full << x_pert, sys.latent_from_theta(theta_pert, latent_ref);
        full_var << p * var_x, p * var_latent;
        const Matrix ens = sigma_ensemble(diagonal_belief(full, full_var)).members;
        fr = perfect_forecast(ens, *sys.truth, n, cfg.horizon, method_rng(), icfg);
      } else if (method == "semiparametric") {
        const Vector bump = gaussian_on_points(np.basis.points, lagged, precision_embedded, 1.0);
        const SampledDensity p0 = normalize_density(bump, np.basis.peq);
        fr = semiparametric_forecast(x_ens, p0, model, np, cfg.horizon, method_rng, icfg);
      } else if (method == "hmm") {
        fr = hmm_forecast(x_ens, train_theta.values, model, cfg.horizon, method_rng, icfg);
      } else if (method == "msm") {
        fr = msm_forecast(x_ens, theta_pert, p * var_theta, fit, model, cfg.horizon, icfg);
      } else if (method == "persistence") {
        fr = persistence_forecast(x_ens, theta_pert, model, cfg.horizon, icfg);
      } else {
        fr = persistence_forecast(x_ens, Vector::Ones(m), model, cfg.horizon, icfg);
      }
      score_forecast(table, static_cast<Index>(k), fr, truth_x, sums);
    }
  }
  table.rmse = sums / static_cast<double>(cfg.initial_conditions);
  return table;
}

namespace {

GaussianBelief extraction_prior(const TwinSystem& sys, const TwinData& data) {
  const Index n = sys.n;
  const Index m = sys.m;
  Vector mean(n + m), var(n + m);
  mean << data.truth.values.row(0).head(n).transpose(), data.theta.values.row(0).transpose();
  var << Vector::Ones(n), Vector::Constant(m, 0.01);
  return diagonal_belief(mean, var);
}

}  // namespace

NoiseEstimate estimate_noise(const TwinSystem& sys, const TwinData& data,
                             const ExperimentConfig& cfg) {
  const Index n = sys.n;
  const Index m = sys.m;
  AdaptiveQConfig qcfg;
  qcfg.integrator = cfg.integrator();
  qcfg.seed = cfg.seed;
  qcfg.theta_dim = m;
  return adaptive_estimate_Q(slice(data.observations, 0, cfg.training_length), sys.parametric(),
                             observe_leading(n, n + m, cfg.obs_variance),
                             QParameterization::cross_covariance(n, m),
                             extraction_prior(sys, data), qcfg);
}

Index filter_experiment_steps(const ExperimentConfig& cfg) {
  return std::max(cfg.training_length, cfg.eval_start + cfg.eval_count) + cfg.horizon;
}

ParameterRecovery recover_parameters(const TwinSystem& sys, const TwinData& data,
                                     const ExperimentConfig& cfg, const NoiseEstimate* noise) {
  const Index n = sys.n;
  const Index m = sys.m;
  ParameterRecovery out;
  out.noise = noise != nullptr ? *noise : estimate_noise(sys, data, cfg);
  out.q_theta = out.noise.theta_block(m);

  GaussianBelief init = extraction_prior(sys, data);
  init.cov.bottomRightCorner(m, m) = out.q_theta;
  init.cov.bottomRightCorner(m, m).diagonal().array() += 1e-10;
  AugmentedFilterConfig fcfg;
  fcfg.integrator = cfg.integrator();
  fcfg.seed = cfg.seed;
  out.recovered = extract_theta_series(slice(data.observations, 0, cfg.training_length),
                                       sys.parametric(),
                                       observe_leading(n, n + m, cfg.obs_variance),
                                       embed_theta_block(out.q_theta, n), init, fcfg);
  out.theta.values = out.recovered.values.rightCols(m);
  out.theta.tau = out.recovered.tau;

  out.correlation.resize(m);
  for (Index j = 0; j < m; ++j) {
    const Vector a = out.theta.values.col(j);
    const Vector b = data.theta.values.col(j).head(cfg.training_length);
    const Vector da = a.array() - a.mean();
    const Vector db = b.array() - b.mean();
    out.correlation(j) = da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
  }
  out.mean_correlation = out.correlation.mean();
  return out;
}

FilterExperiment run_filter_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const TwinSystem sys = make_system(cfg.system, cfg.epsilon);
  const IntegratorConfig icfg = cfg.integrator();
  const ParametricModel model = sys.parametric();
  const Index n = sys.n;
  const Index m = sys.m;
  const TwinData data = simulate_twin(sys, cfg, filter_experiment_steps(cfg));
  const Climatology clim = climatology(sys, cfg, data.truth.values.bottomRows(1).transpose());

  FilterExperiment out;
  out.recovery = recover_parameters(sys, data, cfg);
  const Matrix& q_theta = out.recovery.q_theta;

  NonparametricModel np;
  if (cfg.has_method("semiparametric")) {
    np = train_nonparametric(delay_embed(out.recovery.theta, DelayConfig{cfg.resolved_lags()}), m,
                             geometry_config(cfg));
  }
  MsmFit fit;
  if (cfg.has_method("msm")) fit = msm_fit(out.recovery.theta);

  const TimeSeries eval_obs = slice(data.observations, cfg.eval_start, cfg.eval_count);
  const Vector x0 = data.truth.values.row(cfg.eval_start).head(n).transpose();
  const Vector theta0 = data.theta.values.row(cfg.eval_start).transpose();
  const Vector latent0 = data.truth.values.row(cfg.eval_start).tail(sys.latent_dim()).transpose();

  SkillTable& table = out.table;
  table = empty_table(cfg, clim.error);
  Matrix sums = Matrix::Zero(table.rmse.rows(), table.rmse.cols());
  Index forecasts = 0;
  for (Index k = 0; k < cfg.eval_count; k += cfg.forecast_stride) ++forecasts;
  table.initial_conditions = forecasts;

  // Training theta rows for the HMM draws.
  const RowMatrix& hmm_rows = out.recovery.theta.values;

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const std::string& method = cfg.methods[mi];
    const std::uint64_t seed = cfg.seed * 1000 + 17 * mi;
    std::vector<GaussianBelief> analyses;
    std::vector<Vector> coeffs;
    Index failed_at = -1;

    if (method == "semiparametric") {
      const ObservationModel obs = observe_leading(n, n + m, cfg.obs_variance);
      const SemiState init = initial_semi_state(x0, Matrix::Identity(n, n), theta0, q_theta, np);
      const SemiFilterRun run = run_filter(eval_obs, init, model, obs, np, icfg);
      for (const auto& s : run.states) {
        analyses.push_back(s.belief);
        coeffs.push_back(s.coeffs);
      }
      failed_at = run.failed_at;
      if (failed_at >= 0) table.failures[method] = run.failure;
      out.semi_diagnostics = run.diagnostics;
    } else {
      GaussianBelief init;
      Propagator propagate;
      Matrix q;
      ObservationModel obs;
      if (method == "perfect") {
        const Index d = sys.truth->dim();
        Vector var(d);
        var << Vector::Ones(n), Vector::Constant(sys.latent_dim(), cfg.system == "l96l63" ? 1.0 : 0.01);
        Vector mean(d);
        mean << x0, latent0;
        init = diagonal_belief(mean, var);
        auto dyn = sys.truth;
        propagate = [dyn, icfg](Vector& z, Index, Rng& rng) {
          try {
            dyn->advance(z, icfg, &rng);
          } catch (const DivergenceError&) {
            return false;
          }
          return true;
        };
        q = Matrix::Zero(d, d);
        obs = observe_leading(n, d, cfg.obs_variance);
      } else if (method == "l96" || method == "hmm") {
        init = diagonal_belief(x0, Vector::Ones(n));
        if (method == "l96") {
          propagate = [model, icfg, m](Vector& z, Index, Rng&) {
            return model.advance(z, Vector::Ones(m), icfg);
          };
        } else {
          propagate = [model, icfg, m, &hmm_rows](Vector& z, Index, Rng& rng) {
            std::uniform_int_distribution<Index> pick(0, hmm_rows.rows() - 1);
            const Vector theta = hmm_rows.row(pick(rng)).head(m).transpose();
            return model.advance(z, theta, icfg);
          };
        }
        q = Matrix::Zero(n, n);
        obs = observe_leading(n, n, cfg.obs_variance);
      } else {
        // Augmented (x, theta): random walk for persistence, OU map for msm.
        Vector mean(n + m);
        mean << x0, theta0;
        init = diagonal_belief(mean, Vector::Ones(n + m));
        init.cov.bottomRightCorner(m, m) = q_theta;
        obs = observe_leading(n, n + m, cfg.obs_variance);
        const Propagator base = augmented_propagator(model, icfg);
        if (method == "persistence") {
          propagate = base;
          q = embed_theta_block(q_theta * cfg.tau, n);
        } else {
          const Vector decay = (-fit.alpha.array() * cfg.tau).exp();
          const Vector theta_mean = fit.mean;
          propagate = [base, decay, theta_mean, n, m](Vector& z, Index j, Rng& rng) {
            const bool ok = base(z, j, rng);
            z.segment(n, m) = theta_mean.array() + decay.array() * (z.segment(n, m) - theta_mean).array();
            return ok;
          };
          const Vector added = fit.variance.array() * (1.0 - decay.array().square());
          q = embed_theta_block(added.asDiagonal(), n);
        }
      }
      VariantRun run = run_variant(eval_obs, obs, propagate, q, init, seed);
      analyses = std::move(run.analyses);
      failed_at = run.failed_at;
      if (failed_at >= 0) table.failures[method] = run.failure;
    }

    // Analysis error over the window; failed steps count as climatology.
    double acc = 0.0;
    for (Index k = 0; k < cfg.eval_count; ++k) {
      if (k < static_cast<Index>(analyses.size())) {
        const Vector truth = data.truth.values.row(cfg.eval_start + k).head(n).transpose();
        acc += rms(analyses[static_cast<std::size_t>(k)].mean.head(n) - truth);
      } else {
        acc += clim.error;
      }
    }
    table.analysis_rmse[method] = acc / static_cast<double>(cfg.eval_count);

    for (Index k = 0; k < cfg.eval_count; k += cfg.forecast_stride) {
      const RowMatrix truth_x = data.truth.values.block(cfg.eval_start + k, 0, cfg.horizon + 1, n);
      ForecastResult fr;
      if (k >= static_cast<Index>(analyses.size())) {
        fr.x_mean = Matrix::Constant(cfg.horizon + 1, n, std::numeric_limits<double>::quiet_NaN());
        fr.diverged_at = 0;
        score_forecast(table, static_cast<Index>(mi), fr, truth_x, sums);
        continue;
      }
      const GaussianBelief& a = analyses[static_cast<std::size_t>(k)];
      Rng rng = make_stream(seed + 1, static_cast<std::uint64_t>(k));
      if (method == "perfect") {
        fr = perfect_forecast(sigma_ensemble(a).members, *sys.truth, n, cfg.horizon, rng(), icfg);
      } else if (method == "semiparametric") {
        fr = semiparametric_forecast(x_sigma(a, n), coeffs[static_cast<std::size_t>(k)], model, np,
                                     cfg.horizon, rng, icfg);
      } else if (method == "hmm") {
        fr = hmm_forecast(x_sigma(a, n), hmm_rows, model, cfg.horizon, rng, icfg);
      } else if (method == "l96") {
        fr = persistence_forecast(x_sigma(a, n), Vector::Ones(m), model, cfg.horizon, icfg);
      } else if (method == "persistence") {
        fr = persistence_forecast(x_sigma(a, n), a.mean.tail(m), model, cfg.horizon, icfg);
      } else {
        const Vector var = a.cov.bottomRightCorner(m, m).diagonal();
        fr = msm_forecast(x_sigma(a, n), a.mean.tail(m), var, fit, model, cfg.horizon, icfg);
      }
      score_forecast(table, static_cast<Index>(mi), fr, truth_x, sums);
    }
  }
  table.rmse = sums / static_cast<double>(forecasts);
  return out;
}

}  // namespace semipar
