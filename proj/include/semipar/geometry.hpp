#pragma once

#include <Eigen/SparseCore>

#include "semipar/common.hpp"
#include "semipar/kernels.hpp"

namespace semipar {

struct GeometryConfig {
  Index basis_size = 100;         // M
  Index bandwidth_neighbors = 32;  // neighbours behind the ad hoc KDE bandwidth
  Index kernel_neighbors = 512;    // sparsity of the diffusion kernel
  Index kde_neighbors = 512;       // sparsity of the density-estimation kernel
  int log2_eps_min = -20;
  int log2_eps_max = 10;
  // Intrinsic dimension of the data. Zero means: estimate from the kernel
  // bandwidth sweep and round to the nearest positive integer.
  double intrinsic_dimension = 0.0;
};

/// Outcome of the dyadic bandwidth sweep maximising d log T / d log eps,
/// T(eps) = sum_ij K_ij(eps).
struct BandwidthTuning {
  double epsilon = 0.0;
  double max_slope = 0.0;  // half the estimated intrinsic dimension
  std::vector<double> log2_eps;
  std::vector<double> log_sums;
};

BandwidthTuning tune_bandwidth(const kernels::NeighborGraph& graph, const Vector& rho,
                               const GeometryConfig& cfg);

/// K_ij = exp(-|x_i - x_j|^2 / (4 eps rho_i rho_j)) on the k-nearest-neighbour
/// graph, symmetrised by max (edge union). Diagonal entries are 1.
Eigen::SparseMatrix<double> pairwise_kernel(const kernels::NeighborGraph& graph, const Vector& rho,
                                            double epsilon);
Eigen::SparseMatrix<double> pairwise_kernel(const RowMatrix& points, const Vector& rho,
                                            double epsilon, Index neighbors);

struct DensityEstimate {
  Vector values;     // density on the data, w.r.t. intrinsic volume
  Vector bandwidth;  // ad hoc kNN bandwidth rho_0
  double epsilon = 0.0;
  double dimension = 0.0;
};

/// Variable-bandwidth kernel density estimate of the sampling density.
DensityEstimate estimate_peq(const RowMatrix& points, const GeometryConfig& cfg = {});

/// Monte-Carlo volume weights w_i proportional to 1 / peq_i with mean 1.
Vector quadrature_weights(const Vector& peq);

/// Data-driven basis of the gradient-flow generator with equilibrium peq,
/// evaluated on the training points.
struct DiffusionBasis {
  RowMatrix points;           // N x d training points, temporal order
  Matrix phi;                 // N x M, column j = phi_j(theta_i); column 0 is 1
  Vector peq;                 // N
  Vector eigenvalues;         // M, nonincreasing, first is ~0
  double tau = 0.1;
  bool temporal = true;
  std::vector<Index> segment_starts;

  struct Diagnostics {
    double kde_epsilon = 0.0;
    double kernel_epsilon = 0.0;
    double dimension = 0.0;
    double mean_bandwidth = 0.0;
  } diagnostics;

  Index size() const { return phi.rows(); }
  Index modes() const { return phi.cols(); }
};

/// Builds M eigenfunctions normalised so (1/N) Phi^T Phi = I with phi_0 = 1.
DiffusionBasis build_basis(const TimeSeries& training, const GeometryConfig& cfg = {});

}  // namespace semipar
