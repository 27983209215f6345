#pragma once

#include "semipar/common.hpp"

namespace semipar {

struct DelayConfig {
  Index lags = 0;
};

/// Row i of the result is (theta_{i+L}, theta_{i+L-1}, ..., theta_i): newest first.
/// The output keeps tau; its t0 moves forward by L samples.
TimeSeries delay_embed(const TimeSeries& series, const DelayConfig& cfg);

}  // namespace semipar
