#include "semipar/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <lapacke.h>

namespace semipar {

namespace {

void check_spread(const RowMatrix& points) {
  if (points.rows() < 2) throw DegenerateGeometryError("need at least two points");
  const double spread = (points.rowwise() - points.row(0)).cwiseAbs().maxCoeff();
  if (!(spread > 0.0)) throw DegenerateGeometryError("all training points coincide");
}

double resolve_dimension(const BandwidthTuning& tuning, const GeometryConfig& cfg) {
  if (cfg.intrinsic_dimension > 0.0) return cfg.intrinsic_dimension;
  return std::max(1.0, std::round(2.0 * tuning.max_slope));
}

struct KdeStage {
  kernels::NeighborGraph graph;  // kernel_neighbors wide
  DensityEstimate estimate;
};

// First `k` columns of a wider neighbour graph.
kernels::NeighborGraph truncate(const kernels::NeighborGraph& g, Index k) {
  if (k >= g.k) return g;
  kernels::NeighborGraph out;
  const Index n = g.size();
  out.k = k;
  out.index.resize(static_cast<std::size_t>(n * k));
  out.dist2.resize(static_cast<std::size_t>(n * k));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) {
      out.index[static_cast<std::size_t>(i * k + j)] = g.neighbor(i, j);
      out.dist2[static_cast<std::size_t>(i * k + j)] = g.d2(i, j);
    }
  }
  return out;
}

KdeStage kde_stage(const RowMatrix& points, const GeometryConfig& cfg) {
  check_spread(points);
  const Index n = points.rows();
  if (cfg.kernel_neighbors < 2 || cfg.kde_neighbors < 2 || cfg.bandwidth_neighbors < 1) {
    throw InvalidParameterError("neighbour counts too small");
  }
  const Index kk = std::min(n, cfg.kernel_neighbors);
  const Index kq = std::min(n, std::max(cfg.kde_neighbors, cfg.bandwidth_neighbors + 1));
  const kernels::NeighborGraph wide = kernels::parallel::nearest_neighbors(points, std::max(kk, kq));
  const kernels::NeighborGraph kde_graph = truncate(wide, kq);
  const Index kb = std::min(cfg.bandwidth_neighbors, kq - 1);

  Vector rho0(n);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 1; j <= kb; ++j) s += kde_graph.d2(i, j);
    rho0(i) = std::sqrt(s / static_cast<double>(kb));
  }
  const double mean_rho = rho0.mean();
  if (!(mean_rho > 0.0)) throw DegenerateGeometryError("nearest-neighbour distances vanish");
  // Heavily duplicated points get a floor instead of a zero bandwidth.
  rho0 = rho0.cwiseMax(1e-8 * mean_rho);

  const BandwidthTuning tuning = tune_bandwidth(kde_graph, rho0, cfg);
  const double dim = resolve_dimension(tuning, cfg);
  const double eps = tuning.epsilon;

  Vector q(n);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 0; j < kde_graph.k; ++j) {
      const Index nb = kde_graph.neighbor(i, j);
      s += std::exp(-kde_graph.d2(i, j) / (4.0 * eps * rho0(i) * rho0(nb)));
    }
    const double volume = std::pow(4.0 * std::numbers::pi * eps * rho0(i) * rho0(i), dim / 2.0);
    q(i) = s / (static_cast<double>(n) * volume);
  }
  KdeStage stage;
  stage.graph = truncate(wide, kk);
  stage.estimate.values = std::move(q);
  stage.estimate.bandwidth = std::move(rho0);
  stage.estimate.epsilon = eps;
  stage.estimate.dimension = dim;
  return stage;
}

// Top `count` eigenpairs (largest algebraic) of a dense symmetric matrix stored
// column-major; `a` is destroyed.
void top_eigenpairs(std::vector<double>& a, Index n, Index count, Vector& values, Matrix& vectors) {
  std::vector<double> w(static_cast<std::size_t>(n));
  vectors.resize(n, count);
  std::vector<lapack_int> support(static_cast<std::size_t>(2 * count));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, 'V', 'I', 'L', static_cast<lapack_int>(n), a.data(),
      static_cast<lapack_int>(n), 0.0, 0.0, static_cast<lapack_int>(n - count + 1),
      static_cast<lapack_int>(n), 0.0, &found, w.data(), vectors.data(),
      static_cast<lapack_int>(n), support.data());
  if (info != 0 || found != count) {
    std::ostringstream msg;
    msg << "symmetric eigensolver failed (info " << info << ", found " << found << " of "
        << count << ")";
    throw NumericError(msg.str());
  }
  // LAPACK returns ascending order; flip to nonincreasing.
  values.resize(count);
  for (Index j = 0; j < count; ++j) values(j) = w[static_cast<std::size_t>(count - 1 - j)];
  vectors = vectors.rowwise().reverse().eval();
}

}  // namespace

BandwidthTuning tune_bandwidth(const kernels::NeighborGraph& graph, const Vector& rho,
                               const GeometryConfig& cfg) {
  if (cfg.log2_eps_max <= cfg.log2_eps_min) throw InvalidParameterError("empty bandwidth grid");
  BandwidthTuning out;
  std::vector<double> eps;
  for (int l = cfg.log2_eps_min; l <= cfg.log2_eps_max; ++l) {
    out.log2_eps.push_back(static_cast<double>(l));
    eps.push_back(std::ldexp(1.0, l));
  }
  std::vector<double> sums;
  kernels::parallel::kernel_sums(graph, rho, eps, sums);
  out.log_sums.resize(sums.size());
  for (std::size_t l = 0; l < sums.size(); ++l) out.log_sums[l] = std::log(sums[l]);

  std::size_t best = 0;
  double best_slope = -1.0;
  for (std::size_t l = 0; l + 1 < sums.size(); ++l) {
    const double slope = (out.log_sums[l + 1] - out.log_sums[l]) / std::numbers::ln2;
    if (slope > best_slope) {
      best_slope = slope;
      best = l;
    }
  }
  // Geometric midpoint of the steepest grid interval.
  out.epsilon = std::sqrt(eps[best] * eps[best + 1]);
  out.max_slope = best_slope;
  return out;
}

Eigen::SparseMatrix<double> pairwise_kernel(const kernels::NeighborGraph& graph, const Vector& rho,
                                            double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidParameterError("kernel scale must be positive");
  if ((rho.array() <= 0.0).any()) throw InvalidParameterError("bandwidths must be positive");
  const Index n = graph.size();
  if (rho.size() != n) throw DimensionMismatchError("one bandwidth per point required");
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(2 * n * graph.k));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < graph.k; ++j) {
      const Index nb = graph.neighbor(i, j);
      const double v = std::exp(-graph.d2(i, j) / (4.0 * epsilon * rho(i) * rho(nb)));
      triplets.emplace_back(i, nb, v);
      if (nb != i) triplets.emplace_back(nb, i, v);
    }
  }
  Eigen::SparseMatrix<double> k(n, n);
  k.setFromTriplets(triplets.begin(), triplets.end(),
                    [](double a, double b) { return std::max(a, b); });
  return k;
}

Eigen::SparseMatrix<double> pairwise_kernel(const RowMatrix& points, const Vector& rho,
                                            double epsilon, Index neighbors) {
  check_spread(points);
  const Index k = std::min(points.rows(), neighbors);
  return pairwise_kernel(kernels::parallel::nearest_neighbors(points, k), rho, epsilon);
}

DensityEstimate estimate_peq(const RowMatrix& points, const GeometryConfig& cfg) {
  return kde_stage(points, cfg).estimate;
}

Vector quadrature_weights(const Vector& peq) {
  if ((peq.array() <= 0.0).any()) throw InvalidParameterError("density must be positive");
  Vector w = peq.cwiseInverse();
  return w / w.mean();
}

DiffusionBasis build_basis(const TimeSeries& training, const GeometryConfig& cfg) {
  const RowMatrix& points = training.values;
  const Index n = points.rows();
  const Index m = cfg.basis_size;
  if (n < 100) throw InsufficientDataError("diffusion basis needs at least 100 training points");
  if (m < 1 || 2 * m >= n) throw InvalidParameterError("basis size must satisfy 1 <= M < N/2");

  const KdeStage stage = kde_stage(points, cfg);
  const double dim = stage.estimate.dimension;

  // Bandwidth rho = q^(-1/2) and right normalisation exponent alpha = -d/4 give
  // the generator Delta + grad(log q) . grad, whose invariant density is q.
  const Vector rho = stage.estimate.values.array().pow(-0.5);
  const BandwidthTuning tuning = tune_bandwidth(stage.graph, rho, cfg);
  const double eps = tuning.epsilon;
  Eigen::SparseMatrix<double> kernel = pairwise_kernel(stage.graph, rho, eps);

  Vector q = Vector::Zero(n);
  for (Index c = 0; c < kernel.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(kernel, c); it; ++it) q(it.row()) += it.value();
  }
  q = q.array() / rho.array().pow(dim);
  const Vector right = q.array().pow(dim / 4.0);  // q^(-alpha)
  Vector degree = Vector::Zero(n);
  for (Index c = 0; c < kernel.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(kernel, c); it; ++it) {
      it.valueRef() *= right(it.row()) * right(it.col());
      degree(it.row()) += it.value();
    }
  }

  // L = R^-2 (D^-1 K - I) / eps is similar to the symmetric
  // S = B^-1/2 (K - D) B^-1/2 / eps with B = R^2 D.
  const Vector b = rho.array().square() * degree.array();
  const Vector b_inv_sqrt = b.array().rsqrt();
  std::vector<double> dense(static_cast<std::size_t>(n * n), 0.0);
  for (Index c = 0; c < kernel.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(kernel, c); it; ++it) {
      dense[static_cast<std::size_t>(it.col() * n + it.row())] =
          it.value() * b_inv_sqrt(it.row()) * b_inv_sqrt(it.col()) / eps;
    }
  }
  for (Index i = 0; i < n; ++i) {
    dense[static_cast<std::size_t>(i * n + i)] -= 1.0 / (eps * rho(i) * rho(i));
  }

  Vector eigenvalues;
  Matrix vectors;
  top_eigenpairs(dense, n, m, eigenvalues, vectors);
  dense.clear();
  dense.shrink_to_fit();

  Matrix phi = b_inv_sqrt.asDiagonal() * vectors;
  // The zero mode is exactly constant; pin it and orthonormalise the rest in
  // the Monte-Carlo inner product (1/N) sum_i f(theta_i) g(theta_i).
  phi.col(0).setOnes();
  const double root_n = std::sqrt(static_cast<double>(n));
  Eigen::HouseholderQR<Matrix> qr(phi / root_n);
  Matrix orthonormal = qr.householderQ() * Matrix::Identity(n, m);
  const Matrix r = qr.matrixQR().topLeftCorner(m, m);
  for (Index j = 0; j < m; ++j) {
    if (r(j, j) < 0.0) orthonormal.col(j) *= -1.0;
  }
  phi = orthonormal * root_n;
  phi.col(0).setOnes();
  for (Index j = 1; j < m; ++j) {
    Index arg = 0;
    phi.col(j).cwiseAbs().maxCoeff(&arg);
    if (phi(arg, j) < 0.0) phi.col(j) *= -1.0;
  }

  DiffusionBasis basis;
  basis.points = points;
  basis.phi = std::move(phi);
  basis.peq = stage.estimate.values;
  basis.eigenvalues = std::move(eigenvalues);
  basis.tau = training.tau;
  basis.temporal = training.temporal;
  basis.segment_starts = training.segment_starts;
  basis.diagnostics.kde_epsilon = stage.estimate.epsilon;
  basis.diagnostics.kernel_epsilon = eps;
  basis.diagnostics.dimension = dim;
  basis.diagnostics.mean_bandwidth = rho.mean();
  return basis;
}

}  // namespace semipar
