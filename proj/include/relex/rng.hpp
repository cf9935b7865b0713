#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace relex {

// Deterministic random source. The distributions are implemented on top of
// raw mt19937_64 output instead of std::*_distribution so that a given seed
// produces the same stream on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). n must be > 0.
  std::size_t index(std::size_t n) { return engine_() % n; }

  // Standard normal via Box-Muller.
  double normal();

  // Normal(0, stddev) resampled until within two standard deviations.
  double trunc_normal(double stddev);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace relex
