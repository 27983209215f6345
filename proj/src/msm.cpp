#include <algorithm>
#include <cmath>

#include "semipar/models.hpp"

namespace semipar {

namespace {

constexpr double kAlphaMin = 1e-6;
constexpr double kAlphaMax = 1e3;

// Integral of the empirical autocorrelation from lag 0 to its first non-positive
// value, trapezoid rule, in units of samples.
double correlation_samples(const Eigen::Ref<const Vector>& centered, double variance) {
  const Index n = centered.size();
  const Index max_lag = n / 2;
  double integral = 0.0;
  double previous = 1.0;
  for (Index lag = 1; lag <= max_lag; ++lag) {
    const double acf =
        centered.head(n - lag).dot(centered.tail(n - lag)) / static_cast<double>(n - lag) / variance;
    if (acf <= 0.0) {
      // Linear interpolation to the zero crossing.
      integral += 0.5 * previous * previous / (previous - acf);
      return integral;
    }
    integral += 0.5 * (previous + acf);
    previous = acf;
  }
  return integral;
}

}  // namespace

MsmFit msm_fit(const TimeSeries& series) {
  if (series.size() < 100) throw InsufficientDataError("MSM fit needs at least 100 samples");
  const Index m = series.dim();
  MsmFit fit;
  fit.mean.resize(m);
  fit.variance.resize(m);
  fit.alpha.resize(m);
  fit.sigma.resize(m);
  fit.correlation_time.resize(m);
  fit.capped.assign(static_cast<std::size_t>(m), false);
  for (Index j = 0; j < m; ++j) {
    const Vector column = series.values.col(j);
    const double mean = column.mean();
    const Vector centered = column.array() - mean;
    const double variance = centered.squaredNorm() / static_cast<double>(column.size());
    if (!(variance > 0.0)) throw DegenerateDataError("MSM fit on a zero-variance series");
    const double t_corr = correlation_samples(centered, variance) * series.tau;
    double alpha = t_corr > 0.0 ? 1.0 / t_corr : kAlphaMax;
    if (alpha < kAlphaMin || alpha > kAlphaMax) {
      alpha = std::clamp(alpha, kAlphaMin, kAlphaMax);
      fit.capped[static_cast<std::size_t>(j)] = true;
    }
    fit.mean(j) = mean;
    fit.variance(j) = variance;
    fit.alpha(j) = alpha;
    fit.correlation_time(j) = 1.0 / alpha;
    fit.sigma(j) = std::sqrt(2.0 * alpha * variance);
  }
  return fit;
}

Vector MsmFit::forecast_mean(const Vector& theta0, double lead) const {
  const Vector decay = (-alpha.array() * lead).exp();
  return mean.array() + decay.array() * (theta0 - mean).array();
}

Vector MsmFit::forecast_variance(const Vector& var0, double lead) const {
  const Vector decay2 = (-2.0 * alpha.array() * lead).exp();
  return variance.array() * (1.0 - decay2.array()) + decay2.array() * var0.array();
}

}  // namespace semipar
