#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <vector>

#include "semipar/embedding.hpp"

using namespace semipar;

namespace {

TimeSeries scalar_series(std::initializer_list<double> v) {
  TimeSeries s;
  s.values.resize(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) s.values(i++, 0) = x;
  return s;
}

}  // namespace

TEST_CASE("two lags of 1..5") {
  const TimeSeries e = delay_embed(scalar_series({1, 2, 3, 4, 5}), DelayConfig{2});
  RowMatrix expect(3, 3);
  expect << 3, 2, 1, 4, 3, 2, 5, 4, 3;
  CHECK(e.values == expect);
  CHECK(e.tau == 0.1);
  CHECK(e.t0 == doctest::Approx(0.2));
}

TEST_CASE("zero lags copy the series") {
  TimeSeries s;
  s.values = RowMatrix::Random(20, 3);
  const TimeSeries e = delay_embed(s, DelayConfig{0});
  CHECK(e.values == s.values);
}

TEST_CASE("shape of a four-lag embedding of 5000 samples") {
  TimeSeries s;
  s.values = RowMatrix::Random(5000, 1);
  const TimeSeries e = delay_embed(s, DelayConfig{4});
  CHECK(e.size() == 4996);
  CHECK(e.dim() == 5);
}

TEST_CASE("multivariate rows are newest first") {
  TimeSeries s;
  s.values = RowMatrix::Random(30, 4);
  const Index lags = 3;
  const TimeSeries e = delay_embed(s, DelayConfig{lags});
  REQUIRE(e.dim() == 16);
  for (Index i = 0; i < e.size(); ++i) {
    for (Index l = 0; l <= lags; ++l) {
      CHECK(e.values.row(i).segment(4 * l, 4) == s.values.row(i + lags - l));
    }
  }
  // Column block 0 is the source without its first L rows.
  CHECK(e.values.leftCols(4) == s.values.bottomRows(30 - lags));
}

TEST_CASE("distinct windows give distinct rows") {
  TimeSeries s;
  Rng rng = make_stream(3, 0);
  s.values = standard_normal(400, rng);
  const TimeSeries e = delay_embed(s, DelayConfig{2});
  std::set<std::vector<double>> rows;
  for (Index i = 0; i < e.size(); ++i) {
    rows.insert(std::vector<double>(e.values.row(i).data(), e.values.row(i).data() + e.dim()));
  }
  CHECK(static_cast<Index>(rows.size()) == e.size());
}

TEST_CASE("too few samples") {
  CHECK_THROWS_AS(delay_embed(scalar_series({1, 2, 3}), DelayConfig{3}), InsufficientDataError);
  CHECK_THROWS_AS(delay_embed(scalar_series({1, 2, 3}), DelayConfig{-1}), InvalidParameterError);
}
