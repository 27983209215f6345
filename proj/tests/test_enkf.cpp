#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "semipar/enkf.hpp"

using namespace semipar;

namespace {

Matrix random_spd(Index d, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  Matrix a(d, d);
  for (Index j = 0; j < d; ++j) a.col(j) = standard_normal(d, rng);
  return a * a.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
}

double relative(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

// Spun-up L96 truth and noisy observations of all 40 sites.
struct L96Run {
  TimeSeries truth;
  TimeSeries obs;
};

L96Run l96_run(Index steps, double noise_var, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  Vector x0 = Vector::Constant(40, 8.0) + standard_normal(40, rng);
  const auto sys = make_lorenz96(40, 8.0);
  const TimeSeries spin = integrate(*sys, x0, IntegratorConfig{}, 500);
  L96Run run;
  run.truth = integrate(*sys, spin.values.bottomRows(1).transpose(), IntegratorConfig{}, steps - 1);
  run.obs = run.truth;
  for (Index i = 0; i < steps; ++i) {
    run.obs.values.row(i) += std::sqrt(noise_var) * standard_normal(40, rng).transpose();
  }
  return run;
}

}  // namespace

TEST_CASE("sigma ensemble") {
  SUBCASE("member count") {
    GaussianBelief b{Vector::Zero(41), Matrix::Identity(41, 41)};
    CHECK(sigma_ensemble(b).size() == 82);
  }

  SUBCASE("identity covariance gives scaled unit vectors") {
    const Index d = 5;
    GaussianBelief b{Vector::LinSpaced(d, 1.0, 5.0), Matrix::Identity(d, d)};
    const Ensemble e = sigma_ensemble(b);
    for (Index k = 0; k < d; ++k) {
      CHECK((e.members.col(k) - b.mean - std::sqrt(5.0) * Vector::Unit(d, k)).norm() <= 1e-14);
      CHECK((e.members.col(d + k) - b.mean + std::sqrt(5.0) * Vector::Unit(d, k)).norm() <= 1e-14);
    }
  }

  SUBCASE("moments round trip") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Index d = 3 + static_cast<Index>(seed) * 7;
      Rng rng = make_stream(seed, 1);
      GaussianBelief b{standard_normal(d, rng), random_spd(d, seed)};
      const GaussianBelief m = ensemble_moments(sigma_ensemble(b).members);
      CHECK((m.mean - b.mean).norm() <= 1e-12 * std::max(1.0, b.mean.norm()));
      CHECK(relative(m.cov, b.cov) <= 1e-10);
    }
  }

  SUBCASE("rank-deficient covariance is accepted, indefinite is not") {
    Vector v(3);
    v << 1.0, 2.0, -1.0;
    GaussianBelief b{Vector::Zero(3), v * v.transpose()};
    CHECK(relative(ensemble_moments(sigma_ensemble(b).members).cov, b.cov) <= 1e-10);
    b.cov(0, 0) = -1.0;
    CHECK_THROWS_AS(sigma_ensemble(b), CovarianceError);
  }
}

TEST_CASE("scalar Kalman update") {
  const double mean = 2.0, var = 0.7, r = 0.3, y = 3.1;
  GaussianBelief prior{Vector::Constant(1, mean), Matrix::Constant(1, 1, var)};
  ObservationModel obs{Matrix::Identity(1, 1), Matrix::Constant(1, 1, r)};
  const AnalysisResult a = assimilate(prior, obs, Vector::Constant(1, y));
  const double gain = var / (var + r);
  CHECK(a.belief.mean(0) == doctest::Approx(mean + gain * (y - mean)).epsilon(1e-8));
  CHECK(a.belief.cov(0, 0) == doctest::Approx((1.0 - gain) * var).epsilon(1e-8));
  CHECK(a.gain(0, 0) == doctest::Approx(gain).epsilon(1e-8));
  CHECK(a.innovation(0) == doctest::Approx(y - mean));
}

TEST_CASE("uncorrelated observations leave the forecast alone") {
  // The observed coordinate carries no information about the others.
  GaussianBelief prior{Vector::Constant(3, 1.0), Matrix::Identity(3, 3)};
  ObservationModel obs = observe_leading(1, 3, 0.5);
  const AnalysisResult a = assimilate(prior, obs, Vector::Constant(1, 4.0));
  CHECK(a.belief.mean.tail(2) == prior.mean.tail(2));
  CHECK((a.belief.cov.bottomRightCorner(2, 2) - prior.cov.bottomRightCorner(2, 2)).norm() <= 1e-14);

  // Nothing correlated at all: C_zy = 0.
  Matrix zf(2, 4);
  zf << 1, -1, 1, -1, 0, 0, 0, 0;
  Matrix yf(1, 4);
  yf << 1, 1, -1, -1;
  const AnalysisResult b = enkf_analysis(zf, yf, Vector::Constant(1, 10.0), Matrix::Identity(1, 1));
  CHECK(b.belief.mean.norm() <= 1e-14);
  CHECK(b.belief.cov(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("zero innovation keeps the mean and shrinks the covariance") {
  GaussianBelief prior{Vector::LinSpaced(4, -1.0, 2.0), random_spd(4, 9)};
  ObservationModel obs = observe_leading(2, 4, 0.2);
  const AnalysisResult a = assimilate(prior, obs, prior.mean.head(2));
  CHECK((a.belief.mean - prior.mean).norm() <= 1e-12);
  CHECK(a.belief.cov.trace() < prior.cov.trace());
}

TEST_CASE("analysis never increases total variance") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng = make_stream(seed, 2);
    const Index d = 2 + static_cast<Index>(seed % 7);
    const Index q = 1 + static_cast<Index>(seed % static_cast<std::uint64_t>(d));
    GaussianBelief prior{standard_normal(d, rng), random_spd(d, seed + 100)};
    ObservationModel obs;
    obs.H = Matrix(q, d);
    for (Index j = 0; j < d; ++j) obs.H.col(j) = standard_normal(q, rng);
    obs.R = random_spd(q, seed + 200);
    const AnalysisResult a = assimilate(prior, obs, standard_normal(q, rng));
    CHECK(a.belief.cov.trace() <= prior.cov.trace() + 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a.belief.cov);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * prior.cov.norm());
  }
}

TEST_CASE("member order does not matter") {
  Rng rng = make_stream(4, 0);
  const Index d = 6, k = 12;
  Matrix zf(d, k);
  for (Index j = 0; j < k; ++j) zf.col(j) = standard_normal(d, rng);
  const Matrix H = Matrix::Identity(3, d);
  const Matrix yf = H * zf;
  const Vector yo = standard_normal(3, rng);
  const Matrix R = 0.3 * Matrix::Identity(3, 3);
  const AnalysisResult a = enkf_analysis(zf, yf, yo, R);

  std::vector<Index> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
  Matrix zp(d, k), yp(3, k);
  for (Index j = 0; j < k; ++j) {
    zp.col(j) = zf.col(perm[static_cast<std::size_t>(j)]);
    yp.col(j) = yf.col(perm[static_cast<std::size_t>(j)]);
  }
  const AnalysisResult b = enkf_analysis(zp, yp, yo, R);
  CHECK((a.belief.mean - b.belief.mean).norm() <= 1e-12);
  CHECK((a.belief.cov - b.belief.cov).norm() <= 1e-12);
}

TEST_CASE("mismatched inputs") {
  CHECK_THROWS_AS(enkf_analysis(Matrix::Zero(2, 4), Matrix::Zero(1, 3), Vector::Zero(1), Matrix::Identity(1, 1)),
                  DimensionMismatchError);
  CHECK_THROWS_AS(observe_leading(5, 3, 1.0), InvalidDimensionError);
  CHECK_THROWS_AS(observe_leading(2, 3, 0.0), InvalidParameterError);
  GaussianBelief b{Vector::Zero(3), Matrix::Identity(2, 2)};
  CHECK_THROWS_AS(sigma_ensemble(b), DimensionMismatchError);
}

TEST_CASE("SPD projection") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng = make_stream(seed, 3);
    const Index d = 2 + static_cast<Index>(seed % 6);
    Matrix q(d, d);
    for (Index j = 0; j < d; ++j) q.col(j) = standard_normal(d, rng);
    const Matrix p = project_spd(q);
    CHECK((p - p.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(p);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, p.norm()));
    CHECK((project_spd(p) - p).norm() <= 1e-12 * std::max(1.0, p.norm()));
  }
  // Symmetric input with a negative eigenvalue maps to its absolute value.
  Matrix s(2, 2);
  s << 1.0, 0.0, 0.0, -3.0;
  CHECK((project_spd(s) - Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal().toDenseMatrix()).norm() <= 1e-12);
}

TEST_CASE("square root and repair") {
  const Matrix c = random_spd(7, 5);
  const Matrix r = spd_sqrt(c);
  CHECK(relative(r * r, c) <= 1e-12);
  CHECK((r - r.transpose()).norm() <= 1e-12);
  Matrix bad = c;
  bad(0, 0) = -10.0;
  CHECK_THROWS_AS(spd_sqrt(bad), CovarianceError);
  const Matrix fixed = psd_repair(bad);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(fixed);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("ensemble forecast replaces diverged members") {
  GaussianBelief b{Vector::Zero(2), Matrix::Identity(2, 2)};
  const Propagator kill_first = [](Vector& z, Index member, Rng&) {
    z *= 2.0;
    return member != 0;
  };
  const ForecastStep fc = ensemble_forecast(b, kill_first, 1, 0);
  CHECK(fc.diverged == 1);
  const Vector survivors = (fc.members.rightCols(3)).rowwise().mean();
  CHECK((fc.members.col(0) - survivors).norm() <= 1e-14);

  const Propagator kill_all = [](Vector&, Index, Rng&) { return false; };
  CHECK_THROWS_AS(ensemble_forecast(b, kill_all, 1, 3), FilterDivergenceError);
}

TEST_CASE("divergence monitor") {
  DivergenceMonitor m(1.0, 10.0, 3);
  const Vector big = Vector::Constant(4, 20.0);
  const Vector small = Vector::Constant(4, 1.0);
  m.observe(big, 0);
  m.observe(big, 1);
  m.observe(small, 2);
  m.observe(big, 3);
  m.observe(big, 4);
  try {
    m.observe(big, 5);
    FAIL("expected divergence");
  } catch (const FilterDivergenceError& e) {
    CHECK(e.step() == 5);
  }
}

TEST_CASE("augmented filter recovers a constant coupling") {
  const L96Run run = l96_run(300, 0.125, 17);
  const ParametricModel model(40, 1, 8.0);
  const ObservationModel obs = observe_leading(40, 41, 0.125);
  GaussianBelief init;
  init.mean = Vector::Zero(41);
  init.mean.head(40) = run.obs.values.row(0).transpose();
  init.mean(40) = 1.2;
  init.cov = Matrix::Identity(41, 41) * 0.125;
  init.cov(40, 40) = 0.05;
  const Matrix Q = embed_theta_block(Matrix::Constant(1, 1, 1e-6), 40);
  const TimeSeries est = extract_theta_series(run.obs, model, obs, Q, init);
  REQUIRE(est.size() == 300);
  const Vector tail = est.values.col(40).tail(100);
  const double mean = tail.mean();
  const double sd = std::sqrt((tail.array() - mean).square().mean());
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sd <= 0.02);
  // The state estimate beats the raw observations.
  const double obs_err = (run.obs.values - run.truth.values).bottomRows(100).norm();
  const double est_err = (est.values.leftCols(40) - run.truth.values).bottomRows(100).norm();
  CHECK(est_err < obs_err);
}

TEST_CASE("a single observed site still runs") {
  const L96Run run = l96_run(100, 0.125, 23);
  TimeSeries one = run.obs;
  one.values = run.obs.values.leftCols(1);
  const ParametricModel model(40, 1, 8.0);
  const ObservationModel obs = observe_leading(1, 41, 0.125);
  GaussianBelief init;
  init.mean = Vector::Constant(41, 8.0);
  init.mean(40) = 1.0;
  init.cov = Matrix::Identity(41, 41);
  init.cov(40, 40) = 0.01;
  const Matrix Q = embed_theta_block(Matrix::Constant(1, 1, 1e-4), 40);
  TimeSeries est;
  CHECK_NOTHROW(est = extract_theta_series(one, model, obs, Q, init));
  CHECK(est.values.allFinite());
}
