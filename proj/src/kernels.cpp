#include "semipar/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace semipar::kernels {

namespace {

void check_graph_request(const RowMatrix& points, Index k) {
  if (k < 1 || k > points.rows()) {
    throw InvalidParameterError("neighbour count must lie in [1, N]");
  }
}

// Fills row i of the graph; shared by both variants so they agree bitwise.
void neighbors_of(const RowMatrix& points, Index i, Index k, std::vector<double>& scratch,
                  std::vector<Index>& order, NeighborGraph& graph) {
  const Index n = points.rows();
  const Index d = points.cols();
  const double* xi = points.row(i).data();
  for (Index j = 0; j < n; ++j) {
    const double* xj = points.row(j).data();
    double s = 0.0;
    for (Index c = 0; c < d; ++c) {
      const double diff = xi[c] - xj[c];
      s += diff * diff;
    }
    scratch[static_cast<std::size_t>(j)] = s;
  }
  std::iota(order.begin(), order.end(), Index{0});
  // Self first, then ascending distance with index as tie-break.
  auto less = [&](Index a, Index b) {
    if (a == i || b == i) return a == i && b != i;
    const double da = scratch[static_cast<std::size_t>(a)];
    const double db = scratch[static_cast<std::size_t>(b)];
    return da < db || (da == db && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), less);
  for (Index j = 0; j < k; ++j) {
    const Index nb = order[static_cast<std::size_t>(j)];
    graph.index[static_cast<std::size_t>(i * k + j)] = nb;
    graph.dist2[static_cast<std::size_t>(i * k + j)] = scratch[static_cast<std::size_t>(nb)];
  }
}

NeighborGraph empty_graph(Index n, Index k) {
  NeighborGraph g;
  g.k = k;
  g.index.resize(static_cast<std::size_t>(n * k));
  g.dist2.resize(static_cast<std::size_t>(n * k));
  return g;
}

double edge_sum(const NeighborGraph& graph, const Vector& rho, Index i, double eps) {
  double s = 0.0;
  for (Index j = 0; j < graph.k; ++j) {
    const Index nb = graph.neighbor(i, j);
    s += std::exp(-graph.d2(i, j) / (4.0 * eps * rho(i) * rho(nb)));
  }
  return s;
}

}  // namespace

namespace serial {

NeighborGraph nearest_neighbors(const RowMatrix& points, Index k) {
  check_graph_request(points, k);
  const Index n = points.rows();
  NeighborGraph graph = empty_graph(n, k);
  std::vector<double> scratch(static_cast<std::size_t>(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) neighbors_of(points, i, k, scratch, order, graph);
  return graph;
}

void reconstruct(const Matrix& phi, const Vector& coeffs, const Vector& peq, Vector& out) {
  const Index n = phi.rows();
  out.setZero(n);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 0; j < phi.cols(); ++j) s += phi(i, j) * coeffs(j);
    out(i) = s * peq(i);
  }
}

void project(const Matrix& phi, const Vector& weights, Vector& out) {
  const Index n = phi.rows();
  out.resize(phi.cols());
  for (Index j = 0; j < phi.cols(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += phi(i, j) * weights(i);
    out(j) = s / static_cast<double>(n);
  }
}

void kernel_sums(const NeighborGraph& graph, const Vector& rho, const std::vector<double>& eps,
                 std::vector<double>& sums) {
  sums.assign(eps.size(), 0.0);
  for (std::size_t l = 0; l < eps.size(); ++l) {
    for (Index i = 0; i < graph.size(); ++i) sums[l] += edge_sum(graph, rho, i, eps[l]);
  }
}

}  // namespace serial

namespace parallel {

NeighborGraph nearest_neighbors(const RowMatrix& points, Index k) {
  check_graph_request(points, k);
  const Index n = points.rows();
  NeighborGraph graph = empty_graph(n, k);
#pragma omp parallel
  {
    std::vector<double> scratch(static_cast<std::size_t>(n));
    std::vector<Index> order(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (Index i = 0; i < n; ++i) neighbors_of(points, i, k, scratch, order, graph);
  }
  return graph;
}

void reconstruct(const Matrix& phi, const Vector& coeffs, const Vector& peq, Vector& out) {
  constexpr Index kBlock = 256;
  const Index n = phi.rows();
  const Index blocks = (n + kBlock - 1) / kBlock;
  out.setZero(n);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < blocks; ++b) {
    const Index lo = b * kBlock;
    const Index hi = std::min(n, lo + kBlock);
    double* dst = out.data();
    // Column sweeps keep phi accesses contiguous; each entry still sums j in order.
    for (Index j = 0; j < phi.cols(); ++j) {
      const double* col = phi.col(j).data();
      const double c = coeffs(j);
      for (Index i = lo; i < hi; ++i) dst[i] += col[i] * c;
    }
    for (Index i = lo; i < hi; ++i) dst[i] *= peq(i);
  }
}

void project(const Matrix& phi, const Vector& weights, Vector& out) {
  const Index n = phi.rows();
  out.resize(phi.cols());
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < phi.cols(); ++j) {
    // Column-contiguous dot product; same summation order as the serial kernel.
    const double* col = phi.col(j).data();
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += col[i] * weights(i);
    out(j) = s / static_cast<double>(n);
  }
}

void kernel_sums(const NeighborGraph& graph, const Vector& rho, const std::vector<double>& eps,
                 std::vector<double>& sums) {
  sums.assign(eps.size(), 0.0);
  const Index n = graph.size();
  for (std::size_t l = 0; l < eps.size(); ++l) {
    double total = 0.0;
#pragma omp parallel for reduction(+ : total) schedule(static)
    for (Index i = 0; i < n; ++i) total += edge_sum(graph, rho, i, eps[l]);
    sums[l] = total;
  }
}

}  // namespace parallel

}  // namespace semipar::kernels
