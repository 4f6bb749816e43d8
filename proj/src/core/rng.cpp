#include "core/rng.hpp"

#include <cmath>

namespace seqnav {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

uint64_t splitmix_scramble(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t RngStream::mix(uint64_t a, uint64_t b) {
  return splitmix_scramble(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return splitmix_scramble(state_);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

uint64_t RngStream::uniform_int(uint64_t n) {
  // Mask down to the next power of two, reject draws >= n.
  uint64_t mask = n - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  for (;;) {
    uint64_t r = next_u64() & mask;
    if (r < n) return r;
  }
}

double RngStream::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

float RngStream::truncated_normal(float stddev) {
  for (;;) {
    double z = normal();
    if (std::abs(z) <= 2.0) return static_cast<float>(z * stddev);
  }
}

}  // namespace seqnav
