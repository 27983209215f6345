#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "semipar/io.hpp"
#include "semipar/report.hpp"

using namespace semipar;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_ou() {
  ExperimentConfig c;
  c.system = "ou-toy";
  c.training_length = 400;
  c.basis_size = 10;
  c.initial_conditions = 3;
  c.ic_spacing = 20;
  c.eval_start = 450;
  c.horizon = 5;
  c.spinup = 50;
  c.climatology_steps = 500;
  c.seed = 7;
  c.methods = {"perfect", "semiparametric", "hmm", "msm", "persistence", "l96"};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("configuration errors surface before any compute") {
  ExperimentConfig c;
  c.methods.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.methods = {"oracle"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.system = "lorenz84";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.h = 0.03;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.training_length = 50;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.obs_variance = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(ExperimentConfig{}.validate());

  ExperimentConfig bad = small_ou();
  bad.methods.clear();
  CHECK_THROWS_AS(run_forecast_experiment(bad), ConfigError);
}

TEST_CASE("configuration from key/value text") {
  const ExperimentConfig c = ExperimentConfig::from_map(
      parse_config("system = l96stochastic\nepsilon = 4\nmethods = hmm, msm\nseed = 12\nfull_scale = yes\n"));
  CHECK(c.system == "l96stochastic");
  CHECK(c.epsilon == 4.0);
  CHECK(c.methods == std::vector<std::string>{"hmm", "msm"});
  CHECK(c.seed == 12);
  CHECK(c.initial_conditions == 1000);
  CHECK(c.resolved_lags() == 1);
  CHECK(c.integrator().substeps == 10);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"colour", "blue"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"epsilon", "fast"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"horizon", "5.5"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_map({{"full_scale", "maybe"}}), ConfigError);
}

TEST_CASE("twin systems") {
  for (const char* name : {"l96l63", "l96stochastic", "ou-toy"}) {
    const TwinSystem sys = make_system(name, 1.0);
    CHECK(sys.n == 40);
    Rng rng = make_stream(1, 0);
    const Vector z = sys.initial_state(rng);
    CHECK(z.size() == sys.truth->dim());
    const Vector latent = sys.latent_from_theta(sys.theta_of(z), z.tail(sys.latent_dim()));
    CHECK((sys.theta_of_latent(latent) - sys.theta_of(z)).norm() <= 1e-12);
  }
  CHECK(make_system("l96l63", 1.0).latent_dim() == 3);
  CHECK_THROWS_AS(make_system("nope", 1.0), ConfigError);
}

TEST_CASE("an unperturbed perfect-model forecast has zero error") {
  // Deterministic truth; the ou-toy latent variable is stochastic.
  ExperimentConfig c = small_ou();
  c.system = "l96l63";
  c.methods = {"perfect"};
  c.perturbation = 0.0;
  const SkillTable t = run_forecast_experiment(c);
  CHECK(t.rmse.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("small ou-toy run: reproducible, reported, frozen") {
  const ExperimentConfig c = small_ou();
  const SkillTable a = run_forecast_experiment(c);
  const SkillTable b = run_forecast_experiment(c);
  CHECK(a.rmse == b.rmse);
  REQUIRE(a.methods.size() == 6);
  CHECK(a.initial_conditions == 3);
  CHECK((a.rmse.array() >= 0.0).all());
  CHECK(a.climatology > 0.0);

  const std::string csv = skill_csv(a);
  CHECK(csv.rfind("lead_steps,lead_days,method,rmse\n", 0) == 0);
  CHECK(count(csv, "\n") == 1 + 6 * 6);
  CHECK(csv.find("\n5,2.500,l96,") != std::string::npos);

  const std::string svg = skill_svg(a, "ou-toy");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  // One polyline per method plus the climatology line.
  CHECK(count(svg, "<polyline") == a.methods.size() + 1);
  for (const auto& m : a.methods) CHECK(svg.find(">" + m + "<") != std::string::npos);

  const fs::path dir = fs::temp_directory_path() / "semipar_test_harness";
  fs::remove_all(dir);
  emit_report(a, dir.string(), "ou-toy");
  CHECK(slurp(dir / "skill.csv") == csv);
  CHECK(fs::exists(dir / "summary.txt"));
  CHECK(fs::exists(dir / "skill.svg"));

  const char* golden_dir = std::getenv("SEMIPAR_GOLDEN_DIR");
  REQUIRE(golden_dir != nullptr);
  const fs::path golden = fs::path(golden_dir) / "ou_toy_skill.csv";
  if (std::getenv("SEMIPAR_UPDATE_GOLDEN") != nullptr) {
    std::ofstream(golden, std::ios::binary) << csv;
  }
  REQUIRE(fs::exists(golden));
  CHECK(slurp(golden) == csv);
}

TEST_CASE("empty skill tables are refused by the report") {
  SkillTable t;
  CHECK_THROWS_AS(skill_csv(t), ConfigError);
  CHECK_THROWS_AS(skill_svg(t, "x"), ConfigError);
}
