#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace evoloco {

// splitmix64 finalizer, used both to condition seeds and to derive
// independent child streams from a base seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(mix64(base) ^ mix64(stream + 0x517cc1b727220a95ULL));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

// Deterministic RNG. All distributions are implemented on top of the raw
// mt19937_64 output so that sequences are reproducible across standard
// library implementations (std:: distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n), rejection sampling
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // inclusive range
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(
                    uniform_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // standard normal via Box-Muller; always consumes two uniforms so the
  // stream position is a pure function of the call count
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  Rng fork(std::uint64_t stream) {
    return Rng(derive_seed(next_u64(), stream));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace evoloco
