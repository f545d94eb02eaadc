#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "placerec/geometry.hpp"

namespace placerec {

// Deterministic random stream. The generator (mt19937_64) is pinned by the
// standard, and the variate mappings below are implemented explicitly, so a
// given seed produces the same sequence on every platform. std::*_distribution
// is implementation-defined and deliberately not used.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1 (Lemire multiply-shift).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the second variate of each pair is kept
  // as a spare for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Independent child stream; salt selects the child.
  RngStream child(std::uint64_t salt) const {
    return RngStream(mix(seed_, salt));
  }

  // splitmix64 finalizer over a salted seed.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace placerec
