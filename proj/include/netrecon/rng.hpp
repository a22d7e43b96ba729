#pragma once

// Deterministic keyed RNG streams. Every sampling site derives its own stream
// from (seed, key...) so results never depend on scheduling or thread count,
// and the generator itself is fixed (no library distributions) so output is
// bit-identical across platforms.

#include <cmath>
#include <cstdint>

#include "netrecon/common.hpp"

namespace netrecon {

// Finalizer with full avalanche; also the output stage of splitmix64.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  return mix64(state += 0x9e3779b97f4a7c15ull);
}

class Rng {
 public:
  // Seeds and keys pass through mix64 so that structured inputs (consecutive
  // seeds, small grid coordinates) yield unrelated stream states. Deriving a
  // stream by merely offsetting the state is not enough: the first outputs of
  // sibling streams stay correlated, which biases short geometric scans.
  explicit Rng(std::uint64_t seed) : state_(mix64(seed + 0x9e3779b97f4a7c15ull)) {}

  // Fold another key into the stream identity.
  Rng key(std::uint64_t k) const {
    Rng r(0);
    r.state_ = mix64(state_ ^ mix64(k + 0x632be59bd9b4e019ull));
    return r;
  }
  Rng key2(std::uint64_t a, std::uint64_t b) const { return key(a).key(b); }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_double() < p; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_u64(std::uint64_t n) {
    if (n == 0) fail("BadArgument", "uniform_u64: n must be positive");
    std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Number of failures before the next success of a Bernoulli(p) sequence.
  // Used for geometric edge skipping; p in (0, 1].
  std::uint64_t geometric_skips(double p) {
    if (p >= 1.0) return 0;
    double u = 1.0 - next_double();  // in (0, 1]
    double g = std::floor(std::log(u) / std::log1p(-p));
    if (g < 0) return 0;
    if (g > 9.0e18) return static_cast<std::uint64_t>(9.0e18);
    return static_cast<std::uint64_t>(g);
  }

 private:
  std::uint64_t state_;
};

}  // namespace netrecon
