#pragma once

#include <cmath>
#include <cstdint>

namespace geomae {

// Deterministic PRNG primitives. Both generators are pinned bit-exactly so
// that outputs reproduce across platforms and implementations.

// SplitMix64: used for seed derivation and for driving the mask shuffle.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

// xorshift64* sampling stream. Seeded through SplitMix64 so that nearby seeds
// give unrelated streams; the internal state must never be zero.
class XorShift64Star {
 public:
  explicit XorShift64Star(uint64_t seed) {
    state_ = SplitMix64(seed).next();
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
  }

  uint64_t next() {
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller. Consumes exactly two uniforms per call regardless of sigma,
  // so streams stay aligned when noise is disabled.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

// Derives the per-index child seed from a parent seed: the (index+1)-th
// output of a SplitMix64 stream seeded with the parent.
inline uint64_t derive_seed(uint64_t parent, uint64_t index) {
  SplitMix64 s(parent);
  uint64_t v = 0;
  for (uint64_t i = 0; i <= index; ++i) v = s.next();
  return v;
}

// Round half to even, returning a non-negative count.
inline int64_t round_half_even(double x) {
  const double f = std::floor(x);
  const double r = x - f;
  int64_t n = static_cast<int64_t>(f);
  if (r > 0.5) return n + 1;
  if (r < 0.5) return n;
  return (n % 2 == 0) ? n : n + 1;
}

}  // namespace geomae
