#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "dcomp/compose.hpp"

namespace dcomp {

/// Seeded generator with a fixed, platform-independent mapping from engine
/// output to draws. The standard distributions are implementation-defined, so
/// only the raw mt19937_64 stream is used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased (rejection on the top range).
  std::size_t below(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Inverse-CDF draw from non-negative weights (need not sum to one).
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double target = uniform() * total;
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      cum += weights[i];
      last_positive = i;
      if (target < cum) return i;
    }
    return last_positive;
  }

  std::size_t categorical(const LogProbVector& d) {
    const auto p = d.probs();
    return categorical(std::span<const double>(p));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dcomp
