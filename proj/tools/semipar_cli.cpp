#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "semipar/embedding.hpp"
#include "semipar/harness.hpp"
#include "semipar/io.hpp"
#include "semipar/report.hpp"

namespace fs = std::filesystem;
using namespace semipar;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::string methods;
  std::string out_dir = "out";
  bool full_scale = false;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config, "flat key = value experiment config");
  cmd->add_option("--seed", opt.seed, "random seed");
  cmd->add_option("--epsilon", opt.epsilon, "time-scale separation of the parameter dynamics");
  cmd->add_option("--methods", opt.methods, "comma-separated method list");
  cmd->add_option("--out-dir", opt.out_dir, "output directory")->capture_default_str();
  cmd->add_flag("--full-scale", opt.full_scale, "1000 initial conditions, forecast every analysis");
}

ExperimentConfig resolve(const CommonOptions& opt) {
  ExperimentConfig cfg;
  if (!opt.config.empty()) cfg = ExperimentConfig::from_map(read_config(opt.config));
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.epsilon) cfg.epsilon = *opt.epsilon;
  if (!opt.methods.empty()) cfg.methods = split_methods(opt.methods);
  if (opt.full_scale) cfg.apply_full_scale();
  cfg.validate();
  fs::create_directories(opt.out_dir);
  return cfg;
}

std::string path_in(const CommonOptions& opt, const std::string& name) {
  return (fs::path(opt.out_dir) / name).string();
}

std::string describe(const ExperimentConfig& cfg) {
  std::ostringstream s;
  s << cfg.system << ", epsilon = " << cfg.epsilon << ", seed = " << cfg.seed;
  return s.str();
}

void print_recovery(const ParameterRecovery& r) {
  std::cout << "estimated Var(theta) (diagonal of Qhat theta block):";
  for (Index j = 0; j < r.q_theta.rows(); ++j) std::cout << ' ' << r.q_theta(j, j);
  std::cout << "\nadaptive sweeps: " << r.noise.sweeps << '\n';
  std::cout << "theta correlation with truth:";
  for (Index j = 0; j < r.correlation.size(); ++j) std::cout << ' ' << r.correlation(j);
  std::cout << '\n';
}

int cmd_simulate(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  const TwinSystem sys = make_system(cfg.system, cfg.epsilon);
  const TwinData data = simulate_twin(sys, cfg, filter_experiment_steps(cfg));
  write_series_csv(path_in(opt, "truth.csv"), data.truth);
  write_series_csv(path_in(opt, "theta.csv"), data.theta, "theta_");
  write_series_csv(path_in(opt, "observations.csv"), data.observations, "y_");
  std::cout << "simulated " << data.truth.size() << " samples (" << describe(cfg) << ") into "
            << opt.out_dir << '\n';
  return 0;
}

int cmd_estimate_noise(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  const TwinSystem sys = make_system(cfg.system, cfg.epsilon);
  const TwinData data = simulate_twin(sys, cfg, filter_experiment_steps(cfg));
  const NoiseEstimate noise = estimate_noise(sys, data, cfg);
  save_noise(path_in(opt, "noise.arr"), noise);
  const Matrix qt = noise.theta_block(sys.m);
  std::cout << "estimated Var(theta):";
  for (Index j = 0; j < qt.rows(); ++j) std::cout << ' ' << qt(j, j);
  std::cout << "\nsweeps: " << noise.sweeps << "\nwrote " << path_in(opt, "noise.arr") << '\n';
  return 0;
}

int cmd_recover_theta(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  const TwinSystem sys = make_system(cfg.system, cfg.epsilon);
  const TwinData data = simulate_twin(sys, cfg, filter_experiment_steps(cfg));
  std::optional<NoiseEstimate> noise;
  if (fs::exists(path_in(opt, "noise.arr"))) noise = load_noise(path_in(opt, "noise.arr"));
  const ParameterRecovery r = recover_parameters(sys, data, cfg, noise ? &*noise : nullptr);
  if (!noise) save_noise(path_in(opt, "noise.arr"), r.noise);
  write_series_csv(path_in(opt, "recovered_theta.csv"), r.theta, "theta_");
  print_recovery(r);
  return 0;
}

int cmd_train(const CommonOptions& opt, const std::string& input) {
  const ExperimentConfig cfg = resolve(opt);
  const TwinSystem sys = make_system(cfg.system, cfg.epsilon);
  const std::string source = input.empty() ? path_in(opt, "recovered_theta.csv") : input;
  TimeSeries theta = read_series_csv(source);
  if (theta.size() > cfg.training_length) theta.values.conservativeResize(cfg.training_length, theta.dim());
  if (theta.dim() != sys.m) throw ConfigError("parameter series width does not match the system");
  GeometryConfig g;
  g.basis_size = cfg.basis_size;
  const NonparametricModel np =
      train_nonparametric(delay_embed(theta, DelayConfig{cfg.resolved_lags()}), sys.m, g);
  save_model(path_in(opt, "model.arr"), np);
  std::cout << "trained " << np.basis.modes() << " modes on " << np.basis.size()
            << " points (dimension " << np.basis.diagnostics.dimension << ", kernel epsilon "
            << np.basis.diagnostics.kernel_epsilon << ")\nwrote " << path_in(opt, "model.arr")
            << '\n';
  return 0;
}

int cmd_filter(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  const FilterExperiment result = run_filter_experiment(cfg);
  emit_report(result.table, opt.out_dir, "filter forecasts: " + describe(cfg));
  print_recovery(result.recovery);
  std::cout << skill_summary(result.table, "filter forecasts: " + describe(cfg));
  return 0;
}

int cmd_forecast(const CommonOptions& opt) {
  const ExperimentConfig cfg = resolve(opt);
  const SkillTable table = run_forecast_experiment(cfg);
  emit_report(table, opt.out_dir, "forecasts: " + describe(cfg));
  std::cout << skill_summary(table, "forecasts: " + describe(cfg));
  return 0;
}

int cmd_benchmark(const CommonOptions& opt) {
  ExperimentConfig base = resolve(opt);
  const std::vector<double> epsilons =
      opt.epsilon ? std::vector<double>{*opt.epsilon} : std::vector<double>{0.25, 1.0, 4.0};
  for (double eps : epsilons) {
    ExperimentConfig cfg = base;
    cfg.epsilon = eps;
    std::ostringstream tag;
    tag << cfg.system << "_eps" << eps;
    if (cfg.system == "l96l63") {
      const SkillTable table = run_forecast_experiment(cfg);
      const std::string dir = (fs::path(opt.out_dir) / ("forecast_" + tag.str())).string();
      emit_report(table, dir, "forecasts: " + describe(cfg));
      std::cout << skill_summary(table, "forecasts: " + describe(cfg)) << '\n';
    }
    const FilterExperiment result = run_filter_experiment(cfg);
    const std::string dir = (fs::path(opt.out_dir) / ("filter_" + tag.str())).string();
    emit_report(result.table, dir, "filter forecasts: " + describe(cfg));
    print_recovery(result.recovery);
    std::cout << skill_summary(result.table, "filter forecasts: " + describe(cfg)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric forecasting and filtering twin experiments"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::string train_input;
  auto* simulate = app.add_subcommand("simulate", "generate truth, parameters and observations");
  auto* noise = app.add_subcommand("estimate-noise", "adaptive estimate of the model noise Q");
  auto* recover = app.add_subcommand("recover-theta", "extract the hidden parameter series");
  auto* train = app.add_subcommand("train", "build the basis and shift operator");
  auto* filter = app.add_subcommand("filter", "filter the evaluation window and score forecasts");
  auto* forecast = app.add_subcommand("forecast", "paired forecast comparison from perturbed truth");
  auto* bench = app.add_subcommand("benchmark", "forecast and filter protocols over epsilon");
  for (auto* cmd : {simulate, noise, recover, train, filter, forecast, bench}) add_common(cmd, opt);
  train->add_option("--input", train_input, "parameter series CSV (default: recovered_theta.csv)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(opt);
    if (*noise) return cmd_estimate_noise(opt);
    if (*recover) return cmd_recover_theta(opt);
    if (*train) return cmd_train(opt, train_input);
    if (*filter) return cmd_filter(opt);
    if (*forecast) return cmd_forecast(opt);
    if (*bench) return cmd_benchmark(opt);
  } catch (const EstimationError& e) {
    std::cerr << "error: " << e.what() << " (" << e.history().size() << " sweeps recorded)\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
