#include "semipar/dforecast.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semipar/kernels.hpp"

namespace semipar {

namespace {

constexpr double kCollapseMass = 1e-12;
constexpr double kMinAcceptance = 1e-4;

void check_size(const Vector& values, const DiffusionBasis& basis) {
  if (values.size() != basis.size()) {
    throw DimensionMismatchError("density is not sampled on the basis training points");
  }
}

}  // namespace

double normalization_factor(const Vector& values, const Vector& peq) {
  if (values.size() != peq.size()) throw DimensionMismatchError("density and peq differ in size");
  return (values.array() / peq.array()).mean();
}

SampledDensity normalize_density(Vector values, const Vector& peq) {
  values = values.cwiseMax(0.0);
  const double z = normalization_factor(values, peq);
  if (!(z >= kCollapseMass)) {
    std::ostringstream msg;
    msg << "density collapsed on the training data (mass " << z << ")";
    throw DensityCollapseError(msg.str());
  }
  SampledDensity out;
  out.values = values / z;
  out.normalized = true;
  return out;
}

Vector project_density(const SampledDensity& p, const DiffusionBasis& basis) {
  check_size(p.values, basis);
  const Vector weights = p.values.array() / basis.peq.array();
  Vector c;
  kernels::parallel::project(basis.phi, weights, c);
  return c;
}

ShiftOperator build_shift_operator(const DiffusionBasis& basis) {
  if (!basis.temporal) {
    throw PreconditionError("shift operator needs training points in temporal order");
  }
  const Index n = basis.size();
  std::vector<bool> boundary(static_cast<std::size_t>(std::max<Index>(n, 1)), false);
  for (Index s : basis.segment_starts) {
    if (s > 0 && s < n) boundary[static_cast<std::size_t>(s)] = true;
  }
  // Rows i of `from` pair with rows i of `to` = successor of i.
  std::vector<Index> sources;
  for (Index i = 0; i + 1 < n; ++i) {
    if (!boundary[static_cast<std::size_t>(i + 1)]) sources.push_back(i);
  }
  const Index pairs = static_cast<Index>(sources.size());
  if (pairs < 2) throw InsufficientDataError("shift operator needs at least two temporal pairs");
  const Index m = basis.modes();
  Matrix from(pairs, m), to(pairs, m);
  for (Index r = 0; r < pairs; ++r) {
    const Index i = sources[static_cast<std::size_t>(r)];
    from.row(r) = basis.phi.row(i);
    to.row(r) = basis.phi.row(i + 1);
  }
  ShiftOperator op;
  op.A = to.transpose() * from / static_cast<double>(pairs);
  op.tau = basis.tau;
  return op;
}

Vector forecast_coeffs(const Vector& c, const ShiftOperator& op, Index steps) {
  if (steps < 0) throw InvalidParameterError("negative forecast step count");
  if (c.size() != op.A.cols()) throw DimensionMismatchError("coefficient count mismatch");
  Vector out = c;
  for (Index s = 0; s < steps; ++s) out = op.A * out;
  return out;
}

SampledDensity reconstruct_density(const Vector& c, const DiffusionBasis& basis, double* mass) {
  if (c.size() != basis.modes()) throw DimensionMismatchError("coefficient count mismatch");
  Vector values;
  kernels::parallel::reconstruct(basis.phi, c, basis.peq, values);
  values = values.cwiseMax(0.0);
  if (mass != nullptr) *mass = normalization_factor(values, basis.peq);
  return normalize_density(std::move(values), basis.peq);
}

RejectionSample rejection_sample(const SampledDensity& p, const DiffusionBasis& basis, Index count,
                                 Rng& rng) {
  check_size(p.values, basis);
  if (count < 0) throw InvalidParameterError("negative sample count");
  const Vector ratio = p.values.array() / basis.peq.array();
  const double mass = ratio.mean();
  if (!(mass >= kCollapseMass)) throw DensityCollapseError("cannot sample a collapsed density");
  RejectionSample out;
  out.bound = ratio.maxCoeff();
  // Expected acceptance is mass / P.
  if (mass / out.bound < kMinAcceptance) {
    std::ostringstream msg;
    msg << "rejection acceptance probability " << mass / out.bound << " below " << kMinAcceptance;
    throw PathologicalDensityError(msg.str());
  }
  std::uniform_int_distribution<Index> pick(0, basis.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.rows.reserve(static_cast<std::size_t>(count));
  while (static_cast<Index>(out.rows.size()) < count) {
    const Index m = pick(rng);
    ++out.proposals;
    if (unit(rng) * out.bound < ratio(m)) out.rows.push_back(m);
  }
  return out;
}

DensityMoments density_moments(const SampledDensity& p, const DiffusionBasis& basis,
                               Index leading) {
  check_size(p.values, basis);
  const Index d = leading < 0 ? basis.points.cols() : std::min(leading, basis.points.cols());
  Vector w = p.values.array() / basis.peq.array();
  const double total = w.sum();
  if (!(total / static_cast<double>(w.size()) >= kCollapseMass)) {
    throw DensityCollapseError("moments of a collapsed density");
  }
  w /= total;
  const auto theta = basis.points.leftCols(d);
  DensityMoments out;
  out.mean = theta.transpose() * w;
  const RowMatrix centered = theta.rowwise() - out.mean.transpose();
  out.covariance = centered.transpose() * w.asDiagonal() * centered;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

Vector gaussian_on_points(const RowMatrix& points, const Vector& mean, const Matrix& precision,
                          double scale) {
  const Index d = mean.size();
  if (d > points.cols() || precision.rows() != d || precision.cols() != d) {
    throw DimensionMismatchError("Gaussian dimension does not match the points");
  }
  const RowMatrix centered = points.leftCols(d).rowwise() - mean.transpose();
  const RowMatrix tmp = centered * precision;
  Vector exponent = -scale * (tmp.cwiseProduct(centered)).rowwise().sum();
  exponent.array() -= exponent.maxCoeff();
  return exponent.array().exp();
}

}  // namespace semipar
