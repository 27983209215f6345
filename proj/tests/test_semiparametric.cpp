#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "semipar/semiparametric.hpp"

using namespace semipar;

namespace {

constexpr double kTau = 0.1;
constexpr Index kPinned = 100;  // training row whose coupling is exactly 1

// OU coupling with mean 1 and SD 0.1, rate 1.
TimeSeries coupling_series(Index n, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal;
  const double rho = std::exp(-kTau);
  TimeSeries s;
  s.tau = kTau;
  s.values.resize(n, 1);
  double z = normal(rng);
  for (Index i = 0; i < n; ++i) {
    s.values(i, 0) = 1.0 + 0.1 * z;
    z = rho * z + std::sqrt(1.0 - rho * rho) * normal(rng);
  }
  s.values(kPinned, 0) = 1.0;
  return s;
}

const NonparametricModel& toy_model() {
  static const NonparametricModel np = [] {
    GeometryConfig cfg;
    cfg.basis_size = 40;
    return train_nonparametric(coupling_series(3000, 8), 1, cfg);
  }();
  return np;
}

Matrix l96_ensemble(Index k, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  const TimeSeries spin = integrate(*make_lorenz96(40, 8.0), Vector::Constant(40, 8.0) + standard_normal(40, rng),
                                    IntegratorConfig{}, 300);
  const Vector x = spin.values.bottomRows(1).transpose();
  Matrix e(40, k);
  for (Index j = 0; j < k; ++j) e.col(j) = x + 0.1 * standard_normal(40, rng);
  return e;
}

}  // namespace

TEST_CASE("non-informative prior") {
  const NonparametricModel& np = toy_model();
  const SemiState s = initial_semi_state(Vector::Zero(40), Matrix::Identity(40, 40), Vector::Constant(1, 1.0),
                                         Matrix::Constant(1, 1, 0.01), np);
  CHECK(s.coeffs(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.coeffs.tail(s.coeffs.size() - 1).cwiseAbs().maxCoeff() <= 0.05);
  CHECK(s.belief.cov(40, 40) == 0.01);
  CHECK(s.belief.cov.topRightCorner(40, 1).norm() == 0.0);
  CHECK_THROWS_AS(initial_semi_state(Vector::Zero(40), Matrix::Identity(40, 40), Vector::Zero(2),
                                     Matrix::Identity(2, 2), np),
                  DimensionMismatchError);
}

TEST_CASE("Bayesian update limits") {
  const NonparametricModel& np = toy_model();
  const SampledDensity prior = reconstruct_density(np.shift.A * np.shift.A * [&] {
    Vector c = np.equilibrium_coeffs();
    c(1) = 0.3;
    return c;
  }(), np.basis);

  SUBCASE("flat likelihood") {
    const SampledDensity post = bayes_update(prior, Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 1e12), np);
    const Vector a = project_density(prior, np.basis);
    const Vector b = project_density(post, np.basis);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
  }

  SUBCASE("peaked likelihood at a training point") {
    const Index target = 1234;
    const Vector theta = np.theta(target);
    // The update adds a 1e-10 jitter, so the likelihood SD bottoms out at 1e-5.
    const SampledDensity post = bayes_update(prior, theta, Matrix::Zero(1, 1), np);
    const DensityMoments m = density_moments(post, np.basis, 1);
    CHECK(std::abs(m.mean(0) - theta(0)) <= 1e-5);
    CHECK(m.covariance(0, 0) <= 1e-10);
  }

  SUBCASE("likelihood far from every point") {
    // The exponent is shifted by its maximum, so the nearest point survives.
    const SampledDensity flat{np.basis.peq, true};
    const SampledDensity post = bayes_update(flat, Vector::Constant(1, 50.0), Matrix::Constant(1, 1, 1e-6), np);
    const DensityMoments m = density_moments(post, np.basis, 1);
    CHECK(m.mean(0) == np.basis.points.col(0).maxCoeff());
    // A prior that vanishes there leaves nothing.
    Vector cut = np.basis.peq;
    Index top = 0;
    np.basis.points.col(0).maxCoeff(&top);
    cut(top) = 0.0;
    CHECK_THROWS_AS(bayes_update(SampledDensity{cut, true}, Vector::Constant(1, 50.0), Matrix::Constant(1, 1, 1e-6), np),
                    DensityCollapseError);
  }
}

TEST_CASE("parameter density evolves without feedback from x") {
  const NonparametricModel& np = toy_model();
  const ParametricModel model(40, 1, 8.0);
  const SampledDensity start =
      normalize_density(gaussian_on_points(np.basis.points, Vector::Constant(1, 1.15),
                                           Matrix::Constant(1, 1, 1.0 / 0.0009), 0.5),
                        np.basis.peq);
  const Vector c0 = project_density(start, np.basis);
  Rng rng = make_stream(3, 0);
  const Index horizon = 12;
  const ForecastResult f = semiparametric_forecast(l96_ensemble(10, 1), c0, model, np, horizon, rng);
  for (Index l = 0; l <= horizon; ++l) {
    const SampledDensity p = reconstruct_density(forecast_coeffs(c0, np.shift, l), np.basis);
    const DensityMoments m = density_moments(p, np.basis, 1);
    CHECK(f.theta_mean(l, 0) == m.mean(0));
    CHECK(f.theta_var(l, 0) == m.covariance(0, 0));
  }
  // A different x ensemble leaves the parameter record untouched.
  Rng other = make_stream(4, 0);
  const ForecastResult g = semiparametric_forecast(l96_ensemble(10, 2), c0, model, np, horizon, other);
  CHECK(g.theta_mean == f.theta_mean);
}

TEST_CASE("parameter forecast follows the OU mean") {
  const NonparametricModel& np = toy_model();
  const ParametricModel model(40, 1, 8.0);
  Vector bump(np.basis.size());
  for (Index i = 0; i < np.basis.size(); ++i) {
    const double z = (np.basis.points(i, 0) - 1.15) / 0.03;
    bump(i) = std::exp(-0.5 * z * z);
  }
  const SampledDensity start = normalize_density(bump, np.basis.peq);
  Rng rng = make_stream(5, 0);
  const ForecastResult f = semiparametric_forecast(l96_ensemble(4, 3), start, model, np, 10, rng);
  const double m0 = f.theta_mean(0, 0) - 1.0;
  for (Index l = 1; l <= 10; ++l) {
    const double exact = 1.0 + m0 * std::exp(-kTau * static_cast<double>(l));
    // Climatological SD of the coupling is 0.1.
    CHECK(std::abs(f.theta_mean(l, 0) - exact) <= 0.1 * 0.1);
  }
}

TEST_CASE("a point mass at unit coupling reduces the first step to L96") {
  const NonparametricModel& np = toy_model();
  REQUIRE(np.theta(kPinned)(0) == 1.0);
  Vector spike = Vector::Zero(np.basis.size());
  spike(kPinned) = 1.0;
  const SampledDensity p = normalize_density(spike, np.basis.peq);
  const Matrix x0 = l96_ensemble(6, 7);
  Rng rng = make_stream(6, 0);
  const ForecastResult f = semiparametric_forecast(x0, p, ParametricModel(40, 1, 8.0), np, 1, rng);
  Vector mean = Vector::Zero(40);
  for (Index j = 0; j < x0.cols(); ++j) {
    mean += integrate(*make_lorenz96(40, 8.0), x0.col(j), IntegratorConfig{}, 1).values.row(1).transpose();
  }
  mean /= static_cast<double>(x0.cols());
  CHECK((f.x_mean.row(1).transpose() - mean).norm() <= 1e-12 * mean.norm());
}

TEST_CASE("density collapse resets to equilibrium and is counted") {
  const NonparametricModel& np = toy_model();
  Rng rng = make_stream(8, 0);
  const ForecastResult f =
      semiparametric_forecast(l96_ensemble(4, 4), Vector(-np.equilibrium_coeffs()), ParametricModel(40, 1, 8.0), np, 3, rng);
  CHECK(f.density_resets >= 1);
  CHECK(f.x_mean.allFinite());
  CHECK(f.theta_mean(0, 0) == doctest::Approx(density_moments(SampledDensity{np.basis.peq, true}, np.basis, 1).mean(0)));
}

TEST_CASE("filter steps are deterministic") {
  const NonparametricModel& np = toy_model();
  const ParametricModel model(40, 1, 8.0);
  const ObservationModel obs = observe_leading(40, 41, 0.125);
  const Matrix e = l96_ensemble(2, 9);
  SemiState s = initial_semi_state(e.col(0), Matrix::Identity(40, 40), Vector::Constant(1, 1.0),
                                   Matrix::Constant(1, 1, 0.01), np);
  const Vector yo = e.col(1);
  SemiDiagnostics da, db;
  const SemiState a = semiparametric_filter_step(s, yo, model, obs, np, IntegratorConfig{}, &da);
  const SemiState b = semiparametric_filter_step(s, yo, model, obs, np, IntegratorConfig{}, &db);
  CHECK(a.belief.mean == b.belief.mean);
  CHECK(a.belief.cov == b.belief.cov);
  CHECK(a.coeffs == b.coeffs);
  CHECK(da.last_innovation == db.last_innovation);
  CHECK(a.belief.cov.trace() < s.belief.cov.trace() + 40.0);
  CHECK((a.belief.cov - a.belief.cov.transpose()).norm() == 0.0);
}

TEST_CASE("filter runs") {
  const NonparametricModel& np = toy_model();
  const ParametricModel model(40, 1, 8.0);
  const ObservationModel obs = observe_leading(40, 41, 0.125);
  const Matrix e = l96_ensemble(1, 10);
  const SemiState s = initial_semi_state(e.col(0), Matrix::Identity(40, 40), Vector::Constant(1, 1.0),
                                         Matrix::Constant(1, 1, 0.01), np);

  TimeSeries none;
  none.values.resize(0, 40);
  const SemiFilterRun empty = run_filter(none, s, model, obs, np);
  REQUIRE(empty.states.size() == 1);
  CHECK(empty.states[0].coeffs == s.coeffs);

  // Twin experiment with the coupling held at 1.
  Rng rng = make_stream(11, 0);
  TimeSeries truth = integrate(*make_lorenz96(40, 8.0), e.col(0), IntegratorConfig{}, 59);
  TimeSeries y = truth;
  for (Index i = 0; i < y.size(); ++i) y.values.row(i) += std::sqrt(0.125) * standard_normal(40, rng).transpose();
  const SemiFilterRun run = run_filter(y, s, model, obs, np);
  REQUIRE(run.failed_at == -1);
  REQUIRE(run.states.size() == 60);
  double err = 0.0;
  for (Index i = 30; i < 60; ++i) {
    err += (run.states[static_cast<std::size_t>(i)].belief.mean.head(40) - truth.values.row(i).transpose()).squaredNorm();
  }
  CHECK(std::sqrt(err / (30.0 * 40.0)) < std::sqrt(0.125));
}

TEST_CASE("baselines") {
  const ParametricModel model(40, 1, 8.0);
  const Matrix x0 = l96_ensemble(5, 12);

  SUBCASE("persistence at unit coupling is plain L96") {
    const ForecastResult f = persistence_forecast(x0, Vector::Constant(1, 1.0), model, 5);
    Matrix x = x0;
    for (Index j = 0; j < x.cols(); ++j) {
      x.col(j) = integrate(*make_lorenz96(40, 8.0), x0.col(j), IntegratorConfig{}, 5).values.row(5).transpose();
    }
    CHECK((f.x_mean.row(5).transpose() - x.rowwise().mean()).norm() <= 1e-12 * x.norm());
    CHECK(f.theta_mean.col(0).isConstant(1.0));
  }

  SUBCASE("zero horizon") {
    const ForecastResult f = persistence_forecast(x0, Vector::Constant(1, 1.0), model, 0);
    CHECK(f.horizon() == 0);
    CHECK((f.x_mean.row(0).transpose() - x0.rowwise().mean()).norm() == 0.0);
  }

  SUBCASE("a coupling far from one diverges") {
    const ForecastResult f = persistence_forecast(x0, Vector::Constant(1, 4.0), model, 400);
    CHECK(f.diverged());
    CHECK(std::isnan(f.x_mean(f.horizon(), 0)));
  }

  SUBCASE("HMM draws from the training rows") {
    RowMatrix training(3, 1);
    training << 1.0, 1.0, 1.0;
    Rng rng = make_stream(13, 0);
    const ForecastResult f = hmm_forecast(x0, training, model, 3, rng);
    const ForecastResult g = persistence_forecast(x0, Vector::Constant(1, 1.0), model, 3);
    CHECK(f.x_mean == g.x_mean);
    CHECK(f.theta_mean(3, 0) == 1.0);
  }

  SUBCASE("MSM closed forms") {
    MsmFit fit;
    fit.mean = Vector::Constant(1, 1.0);
    fit.variance = Vector::Constant(1, 0.04);
    fit.alpha = Vector::Constant(1, 0.5);
    fit.sigma = (2.0 * fit.alpha.array() * fit.variance.array()).sqrt();
    const ForecastResult still = msm_forecast(x0, fit.mean, Vector::Zero(1), fit, model, 4);
    CHECK(still.theta_mean.col(0).isConstant(1.0));
    const ForecastResult f = msm_forecast(x0, Vector::Constant(1, 1.2), Vector::Constant(1, 0.01), fit, model, 4);
    for (Index l = 0; l <= 4; ++l) {
      const double e = std::exp(-0.5 * kTau * static_cast<double>(l));
      CHECK(f.theta_mean(l, 0) == doctest::Approx(1.0 + 0.2 * e).epsilon(1e-14));
      CHECK(f.theta_var(l, 0) == doctest::Approx(0.04 * (1.0 - e * e) + e * e * 0.01).epsilon(1e-14));
    }
  }

  SUBCASE("perfect model with an unperturbed start follows the truth") {
    const auto sys = make_l96l63(1.0);
    Vector z0(43);
    z0 << x0.col(0), 1.0, 2.0, 20.0;
    const Matrix ens = z0.replicate(1, 86);
    const ForecastResult f = perfect_forecast(ens, *sys, 40, 5, 1);
    const TimeSeries truth = integrate(*sys, z0, IntegratorConfig{}, 5);
    for (Index l = 0; l <= 5; ++l) {
      CHECK((f.x_mean.row(l) - truth.values.row(l).head(40)).norm() <= 1e-12 * truth.values.row(l).norm());
    }
  }
}
