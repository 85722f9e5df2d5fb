#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cmask {

// Seeded generator with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard, but the std::*_distribution wrappers are not, so the
// mappings below are spelled out to keep runs bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(static_cast<uint64_t>(uniform() * static_cast<double>(span)));
  }

  // Standard normal via Box-Muller. Consumes two draws per call, no caching,
  // so interleaving with other draws stays reproducible.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));  // log1p avoids log(0) at u1 == 0
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cmask
