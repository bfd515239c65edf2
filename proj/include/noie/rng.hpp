#pragma once

#include <cstdint>
#include <utility>

namespace noie {

// Deterministic 64-bit generator (splitmix64, Steele/Lea/Flood 2014).
// One word of state, identical output stream on every platform. All
// randomness in the toolkit flows through this type so that a single
// seed pins down corpus generation, initialization, shuffling and
// dropout masks.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1), 53 random mantissa bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform in [0,n). Modulo bias is irrelevant here; determinism is what matters.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  template <class Seq>
  void shuffle(Seq& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }
};

// Stable derived seed for independent substreams (per-epoch shuffles etc).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  Rng r(a ^ (b * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull));
  r.next_u64();
  return r.next_u64();
}

}  // namespace noie
