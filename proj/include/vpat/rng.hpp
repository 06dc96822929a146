#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace vpat {

/// Seeded generator whose draws are bit-identical across standard libraries.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// <random> distributions are not, so every variate is derived here from
/// raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Exponential with the given rate (events per unit time).
  double exponential(double rate);

  /// Uniform index in [0, n).
  std::uint64_t index(std::uint64_t n);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace vpat
