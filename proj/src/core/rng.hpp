#pragma once

#include <cstdint>
#include <vector>

namespace seqnav {

// Deterministic random stream built on the splitmix64 generator.
// Every distribution transform is implemented here rather than via
// <random> distributions, so a given seed yields bit-identical draw
// sequences on every platform and standard library.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(seed) {}

  // Combines two pieces of seed material into a new seed.
  static uint64_t mix(uint64_t a, uint64_t b);

  // Derives an independent stream from this stream's seed and a salt.
  RngStream fork(uint64_t salt) const { return RngStream(mix(seed(), salt)); }

  uint64_t seed() const { return state_; }

  uint64_t next_u64();

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, n), unbiased via rejection. n must be > 0.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  // Normal(0, stddev) resampled until within 2 stddev.
  float truncated_normal(float stddev);

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[uniform_int(v.size())];
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace seqnav
