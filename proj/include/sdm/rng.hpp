#pragma once

#include <cmath>
#include <cstdint>

#include "sdm/hashing.hpp"

namespace sdm {

// Deterministic generator with a fixed cross-platform output sequence.
// The simulator and trace generator freeze expected results under a seed,
// so draws must not depend on libstdc++ distribution internals.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_open_double() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

  uint64_t next_below(uint64_t n) { return n ? next() % n : 0; }

  double normal() {
    double u1 = next_open_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Lognormal parameterized by its mean (not by mu).
  double lognormal_mean(double mean, double sigma) {
    double mu = std::log(mean) - 0.5 * sigma * sigma;
    return std::exp(mu + sigma * normal());
  }

  double exponential(double mean) { return -mean * std::log(next_open_double()); }

  // Knuth's method; exact for the moderate means used by pooling draws.
  int64_t poisson(double mean) {
    double limit = std::exp(-mean);
    double prod = next_open_double();
    int64_t n = 0;
    while (prod > limit) {
      prod *= next_open_double();
      ++n;
    }
    return n;
  }

 private:
  uint64_t state_;
};

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x5851f42d4c957f2dull));
}

}  // namespace sdm
