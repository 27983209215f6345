#pragma once

// Data-parallel inner loops. Each kernel has a serial reference version, kept
// for testing and benchmarking, and an OpenMP version used by the library.

#include <vector>

#include "semipar/common.hpp"

namespace semipar::kernels {

/// k nearest neighbours of every point (self included, at position 0),
/// stored row-major and sorted by distance.
struct NeighborGraph {
  Index k = 0;
  std::vector<Index> index;
  std::vector<double> dist2;

  Index size() const { return k > 0 ? static_cast<Index>(index.size()) / k : 0; }
  Index neighbor(Index i, Index j) const { return index[static_cast<std::size_t>(i * k + j)]; }
  double d2(Index i, Index j) const { return dist2[static_cast<std::size_t>(i * k + j)]; }
};

namespace serial {

NeighborGraph nearest_neighbors(const RowMatrix& points, Index k);

/// out_i = peq_i * sum_j phi_ij c_j (no clipping).
void reconstruct(const Matrix& phi, const Vector& coeffs, const Vector& peq, Vector& out);

/// out_j = (1/N) sum_i phi_ij w_i.
void project(const Matrix& phi, const Vector& weights, Vector& out);

/// sums_l = sum over graph edges of exp(-d2 / (4 eps_l rho_i rho_j)).
void kernel_sums(const NeighborGraph& graph, const Vector& rho, const std::vector<double>& eps,
                 std::vector<double>& sums);

}  // namespace serial

namespace parallel {

NeighborGraph nearest_neighbors(const RowMatrix& points, Index k);
void reconstruct(const Matrix& phi, const Vector& coeffs, const Vector& peq, Vector& out);
void project(const Matrix& phi, const Vector& weights, Vector& out);
void kernel_sums(const NeighborGraph& graph, const Vector& rho, const std::vector<double>& eps,
                 std::vector<double>& sums);

}  // namespace parallel

/// Runs f(i) for i in [0, count) across OpenMP threads. f must only touch
/// state owned by index i.
template <class F>
void for_each_index(Index count, F&& f) {
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < count; ++i) f(i);
}

}  // namespace semipar::kernels
