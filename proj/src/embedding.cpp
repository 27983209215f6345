#include "semipar/embedding.hpp"

namespace semipar {

TimeSeries delay_embed(const TimeSeries& series, const DelayConfig& cfg) {
  if (cfg.lags < 0) throw InvalidParameterError("lag count must be nonnegative");
  const Index n = series.size();
  const Index m = series.dim();
  const Index lags = cfg.lags;
  if (n <= lags) throw InsufficientDataError("series shorter than the embedding window");
  TimeSeries out;
  out.tau = series.tau;
  out.t0 = series.time(lags);
  out.temporal = series.temporal;
  out.values.resize(n - lags, m * (lags + 1));
  for (Index i = lags; i < n; ++i) {
    for (Index l = 0; l <= lags; ++l) {
      out.values.block(i - lags, l * m, 1, m) = series.values.row(i - l);
    }
  }
  // Windows ending in [s, s + L) straddle a segment start s; the first clean
  // window of the new segment is output row s.
  for (Index start : series.segment_starts) {
    if (start > 0 && start < out.size()) out.segment_starts.push_back(start);
  }
  return out;
}

}  // namespace semipar
