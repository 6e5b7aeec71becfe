#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

namespace cardioloop {

// Seeded generator with platform-independent output.
//
// The engine comes from <random> (its sequence is fixed by the standard);
// the distributions are written out here because the std:: distributions are
// implementation-defined, and simulated sessions must replay byte-identically
// on every toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal (Marsaglia polar method).
  double normal() {
    if (spare_) {
      double s = *spare_;
      spare_.reset();
      return s;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    return u * m;
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace cardioloop
