#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sentspan {

/// Deterministic RNG with a fixed draw sequence.
///
/// std::mt19937_64 itself is fully specified by the standard; the
/// distributions on top of it are not, so the uniform/int helpers here are
/// hand-rolled to keep every seeded sequence identical across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1), 53 random bits.
  double next_uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [-r, r).
  double next_symmetric(double r) { return (2.0 * next_uniform() - 1.0) * r; }

  /// Unbiased uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t x = gen_();
      if (x >= threshold) return x % n;
    }
  }

  /// In-place Fisher-Yates shuffle with a fixed draw order.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sentspan
