#include "semipar/common.hpp"

namespace semipar {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5e3a1u};
  return Rng(seq);
}

Vector standard_normal(Index n, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = normal(rng);
  return out;
}

}  // namespace semipar
