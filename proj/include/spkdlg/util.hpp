#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace spkdlg {

// Deterministic RNG. std::mt19937_64 output is fully specified by the
// standard; the mapping helpers below avoid std::uniform_*_distribution,
// whose sequences are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n), n >= 1
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t bound =
        (std::numeric_limits<std::uint64_t>::max() / n) * n;
    std::uint64_t x = engine_();
    while (x >= bound) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace spkdlg
