#pragma once

#include <cmath>
#include <cstdint>

namespace posbias {

/// splitmix64 generator. Small state, no warmup, and cheap to re-seed, which
/// makes it suitable for counter-based streams: every (seed, stream) pair gets
/// an independent deterministic sequence, so parallel loops that draw from
/// per-iteration streams produce identical results at any thread count.
struct SplitMix64 {
  uint64_t state = 0;

  explicit constexpr SplitMix64(uint64_t seed) : state(seed) {}

  constexpr uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1] (safe as a log argument).
  double next_unit_pos() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Avoids std::normal_distribution so the
  /// stream does not depend on the standard library implementation.
  double next_gauss() {
    const double u1 = next_unit_pos();
    const double u2 = next_unit();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  float next_gauss_f() { return static_cast<float>(next_gauss()); }

  /// Uniform integer in [0, n). Modulo bias is ~n/2^64, irrelevant here; what
  /// matters is that the draw is deterministic.
  uint64_t next_below(uint64_t n) { return next() % n; }
};

/// Derives the seed of sub-stream `stream` from a master seed.
inline uint64_t stream_seed(uint64_t seed, uint64_t stream) {
  SplitMix64 g(seed ^ (0xa0761d6478bd642full * (stream + 1)));
  g.next();
  return g.next();
}

}  // namespace posbias
