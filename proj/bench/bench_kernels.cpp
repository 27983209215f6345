// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <cmath>

#include "semipar/kernels.hpp"

using namespace semipar;

namespace {

RowMatrix noisy_circle(Index n) {
  Rng rng = make_stream(7, 0);
  std::normal_distribution<double> noise(0.0, 0.05);
  RowMatrix pts(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    pts(i, 0) = std::cos(t) + noise(rng);
    pts(i, 1) = std::sin(t) + noise(rng);
    pts(i, 2) = noise(rng);
  }
  return pts;
}

struct Spectral {
  Matrix phi;
  Vector coeffs;
  Vector peq;
  Vector weights;
};

Spectral spectral(Index n, Index m) {
  Rng rng = make_stream(7, 1);
  Spectral s;
  s.phi = Matrix::NullaryExpr(n, m, [&]() { return std::normal_distribution<double>()(rng); });
  s.coeffs = standard_normal(m, rng);
  s.peq = standard_normal(n, rng).cwiseAbs();
  s.weights = standard_normal(n, rng);
  return s;
}

template <class F>
void run_knn(benchmark::State& state, F knn) {
  const RowMatrix pts = noisy_circle(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(knn(pts, 32).dist2.data());
  state.SetComplexityN(state.range(0));
}

void BM_KnnSerial(benchmark::State& s) { run_knn(s, kernels::serial::nearest_neighbors); }
void BM_KnnParallel(benchmark::State& s) { run_knn(s, kernels::parallel::nearest_neighbors); }

template <class F>
void run_reconstruct(benchmark::State& state, F f) {
  const Spectral s = spectral(state.range(0), 100);
  Vector out;
  for (auto _ : state) {
    f(s.phi, s.coeffs, s.peq, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ReconstructSerial(benchmark::State& s) { run_reconstruct(s, kernels::serial::reconstruct); }
void BM_ReconstructParallel(benchmark::State& s) { run_reconstruct(s, kernels::parallel::reconstruct); }

template <class F>
void run_project(benchmark::State& state, F f) {
  const Spectral s = spectral(state.range(0), 100);
  Vector out;
  for (auto _ : state) {
    f(s.phi, s.weights, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ProjectSerial(benchmark::State& s) { run_project(s, kernels::serial::project); }
void BM_ProjectParallel(benchmark::State& s) { run_project(s, kernels::parallel::project); }

template <class F>
void run_sums(benchmark::State& state, F f) {
  const RowMatrix pts = noisy_circle(state.range(0));
  const auto graph = kernels::parallel::nearest_neighbors(pts, 64);
  const Vector rho = Vector::Ones(pts.rows());
  std::vector<double> eps;
  for (int l = -20; l <= 10; ++l) eps.push_back(std::ldexp(1.0, l));
  std::vector<double> sums;
  for (auto _ : state) {
    f(graph, rho, eps, sums);
    benchmark::DoNotOptimize(sums.data());
  }
}

void BM_KernelSumsSerial(benchmark::State& s) { run_sums(s, kernels::serial::kernel_sums); }
void BM_KernelSumsParallel(benchmark::State& s) { run_sums(s, kernels::parallel::kernel_sums); }

}  // namespace

BENCHMARK(BM_KnnSerial)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnParallel)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReconstructSerial)->Arg(5000)->Arg(20000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ReconstructParallel)->Arg(5000)->Arg(20000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ProjectSerial)->Arg(5000)->Arg(20000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ProjectParallel)->Arg(5000)->Arg(20000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_KernelSumsSerial)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelSumsParallel)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
