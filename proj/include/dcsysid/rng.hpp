#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dcsysid {

/// Seeded generator with a fully specified output stream.
///
/// Bits come from std::mt19937_64, whose sequence the C++ standard fixes.
/// Uniforms take the top 53 bits; normals use the Marsaglia polar method.
/// Neither step goes through std::*_distribution, whose algorithms are
/// implementation-defined, so a seed reproduces the same samples on every
/// conforming platform (modulo libm rounding in log/sqrt).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double x = 0.0;
    double y = 0.0;
    double s = 0.0;
    do {
      x = 2.0 * uniform() - 1.0;
      y = 2.0 * uniform() - 1.0;
      s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = y * scale;
    has_spare_ = true;
    return x * scale;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dcsysid
