#pragma once

// Deterministic random numbers shared by every randomized operation.
//
// The generator is SplitMix64 used in counter mode: draw k of a stream with
// key K is mix(K + (k + 1) * 0x9E3779B97F4A7C15), where mix is the SplitMix64
// finalizer. Uniform doubles take the top 53 bits; normals use the basic
// Box-Muller transform (both outputs of a pair are consumed in order). Nothing
// here depends on the platform's <random> implementation, so a seed reproduces
// the same instance everywhere.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <numbers>
#include <unordered_set>
#include <vector>

#include "r3mc/errors.hpp"

namespace r3mc {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  /// `stream` separates independent uses of one user-facing seed.
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(splitmix64_mix(seed ^ splitmix64_mix(stream + kGamma))) {}

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return splitmix64_mix(key_ + counter_ * kGamma);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound), bound > 0, without modulo bias.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream ids used across the library so that e.g. the sampling mask and the
// factors of one seed never share draws.
namespace streams {
inline constexpr std::uint64_t kPoint = 1;
inline constexpr std::uint64_t kHorizontal = 2;
inline constexpr std::uint64_t kFactors = 3;
inline constexpr std::uint64_t kMask = 4;
inline constexpr std::uint64_t kSplit = 5;
inline constexpr std::uint64_t kPowerIteration = 6;
inline constexpr std::uint64_t kColumns = 7;
inline constexpr std::uint64_t kRankUpdate = 8;
}  // namespace streams

/// `count` distinct integers from [0, universe), sorted ascending (Floyd).
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t universe, std::uint64_t count, Rng& rng) {
  if (count > universe) throw ContractViolation("sample_without_replacement: count exceeds the universe");
  std::unordered_set<std::uint64_t> picked;
  picked.reserve(static_cast<std::size_t>(count) * 2);
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t j = universe - count; j < universe; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    const std::uint64_t v = picked.insert(t).second ? t : j;
    if (v == j) picked.insert(j);
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace r3mc
