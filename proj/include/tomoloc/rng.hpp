#pragma once

#include <cmath>
#include <cstdint>

namespace tomoloc {

/// Counter-based deterministic RNG. Every consumer derives an independent
/// stream from (seed, tag...) so parallel execution order cannot change
/// results. splitmix64 is the stream generator; streams for distinct tags are
/// decorrelated by mixing the tags through the same finalizer.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Derive a child stream for a tagged subtask (cell index, repetition, ...).
  Rng child(std::uint64_t tag) const { return Rng(mix(state ^ mix(tag + 0x632be59bd9b4e019ULL))); }
  Rng child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }

  std::uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller (deterministic, no library dependence).
  double next_normal() {
    double u1 = next_double(), u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Binomial(n, p) by explicit Bernoulli trials; n stays small (<= N per cell).
  int binomial(int n, double p) {
    int k = 0;
    for (int i = 0; i < n; ++i)
      if (next_double() < p) ++k;
    return k;
  }
};

}  // namespace tomoloc
