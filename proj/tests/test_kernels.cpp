#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semipar/kernels.hpp"

using namespace semipar;
namespace sk = semipar::kernels;

namespace {

RowMatrix cloud(Index n, Index d, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  RowMatrix p(n, d);
  for (Index i = 0; i < n; ++i) p.row(i) = standard_normal(d, rng).transpose();
  return p;
}

}  // namespace

TEST_CASE("neighbour graph agrees with a full sort") {
  const RowMatrix p = cloud(300, 3, 1);
  const Index k = 12;
  const sk::NeighborGraph g = sk::serial::nearest_neighbors(p, k);
  REQUIRE(g.size() == 300);
  for (Index i = 0; i < p.rows(); i += 17) {
    std::vector<std::pair<double, Index>> all;
    for (Index j = 0; j < p.rows(); ++j) all.emplace_back((p.row(i) - p.row(j)).squaredNorm(), j);
    std::sort(all.begin(), all.end());
    CHECK(g.neighbor(i, 0) == i);
    CHECK(g.d2(i, 0) == 0.0);
    for (Index j = 1; j < k; ++j) {
      CHECK(g.d2(i, j) == doctest::Approx(all[static_cast<std::size_t>(j)].first));
      CHECK(g.d2(i, j) >= g.d2(i, j - 1));
    }
  }
}

TEST_CASE("parallel neighbour graph is bitwise identical") {
  const RowMatrix p = cloud(500, 5, 2);
  const sk::NeighborGraph a = sk::serial::nearest_neighbors(p, 32);
  const sk::NeighborGraph b = sk::parallel::nearest_neighbors(p, 32);
  CHECK(a.index == b.index);
  CHECK(a.dist2 == b.dist2);
}

TEST_CASE("reconstruct and project match serial results exactly") {
  Rng rng = make_stream(3, 0);
  const Index n = 1037, m = 40;
  Matrix phi(n, m);
  for (Index j = 0; j < m; ++j) phi.col(j) = standard_normal(n, rng);
  const Vector c = standard_normal(m, rng);
  const Vector peq = standard_normal(n, rng).cwiseAbs();
  Vector a, b;
  sk::serial::reconstruct(phi, c, peq, a);
  sk::parallel::reconstruct(phi, c, peq, b);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  // Independent oracle.
  const Vector ref = (phi * c).cwiseProduct(peq);
  CHECK((a - ref).norm() <= 1e-12 * ref.norm());

  const Vector w = standard_normal(n, rng);
  sk::serial::project(phi, w, a);
  sk::parallel::project(phi, w, b);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  const Vector pref = phi.transpose() * w / static_cast<double>(n);
  CHECK((a - pref).norm() <= 1e-12 * pref.norm());
}

TEST_CASE("kernel sums agree up to summation order") {
  const RowMatrix p = cloud(400, 2, 4);
  const sk::NeighborGraph g = sk::serial::nearest_neighbors(p, 20);
  const Vector rho = Vector::Ones(400) + 0.1 * cloud(400, 1, 5).col(0).cwiseAbs();
  std::vector<double> eps{1e-3, 1e-2, 0.1, 1.0, 10.0};
  std::vector<double> a, b;
  sk::serial::kernel_sums(g, rho, eps, a);
  sk::parallel::kernel_sums(g, rho, eps, b);
  REQUIRE(a.size() == eps.size());
  for (std::size_t l = 0; l < eps.size(); ++l) {
    CHECK(a[l] == doctest::Approx(b[l]).epsilon(1e-12));
    // Each point contributes at least its self edge, at most k edges.
    CHECK(a[l] >= 400.0);
    CHECK(a[l] <= 400.0 * 20.0 + 1e-9);
  }
  CHECK(a.back() > a.front());
}

TEST_CASE("for_each_index visits every index once") {
  std::vector<int> hits(1000, 0);
  sk::for_each_index(1000, [&](Index i) { hits[static_cast<std::size_t>(i)] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
}

TEST_CASE("invalid neighbour counts") {
  const RowMatrix p = cloud(10, 2, 6);
  CHECK_THROWS_AS(sk::serial::nearest_neighbors(p, 0), InvalidParameterError);
  CHECK_THROWS_AS(sk::parallel::nearest_neighbors(p, 11), InvalidParameterError);
}
