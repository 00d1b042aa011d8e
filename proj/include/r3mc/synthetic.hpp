#pragma once

// Synthetic completion instances: Gaussian or log-uniform-spectrum low-rank
// targets, observed on an exact-count uniform sample.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <vector>

#include "r3mc/errors.hpp"
#include "r3mc/manifold.hpp"
#include "r3mc/problem.hpp"
#include "r3mc/rng.hpp"
#include "r3mc/smallmat.hpp"

namespace r3mc {

/// Target X* = A B^T with A: n x r, B: m x r.
struct LowRankFactors {
  Matrix left;
  Matrix right;

  Matrix dense() const { return left * right.transpose(); }
  double entry(Index i, Index j) const { return left.row(i).dot(right.row(j)); }
};

inline double degrees_of_freedom(Index n, Index m, Index r) {
  return static_cast<double>(n) * static_cast<double>(r) + static_cast<double>(m) * static_cast<double>(r) -
         static_cast<double>(r) * static_cast<double>(r);
}

inline double os_ratio(std::uint64_t count, Index n, Index m, Index r) {
  if (n < 1 || m < 1 || r < 1 || r > std::min(n, m)) throw DimensionError("os_ratio: need 1 <= r <= min(n, m)");
  return static_cast<double>(count) / degrees_of_freedom(n, m, r);
}

/// |Omega| = round(OS * (n r + m r - r^2)).
inline std::uint64_t sample_count(double oversampling, Index n, Index m, Index r) {
  if (n < 1 || m < 1 || r < 1 || r > std::min(n, m)) throw DimensionError("sample_count: need 1 <= r <= min(n, m)");
  if (!(oversampling > 0.0) || !std::isfinite(oversampling)) throw ConfigError("sample_count: OS must be positive");
  return static_cast<std::uint64_t>(std::llround(oversampling * degrees_of_freedom(n, m, r)));
}

inline LowRankFactors synth_gaussian(Index n, Index m, Index r, std::uint64_t seed) {
  if (n < 1 || m < 1 || r < 1) throw DimensionError("synth_gaussian: dimensions must be positive");
  Rng rng(seed, streams::kFactors);
  Matrix a = detail::gaussian_matrix(rng, n, r);
  Matrix b = detail::gaussian_matrix(rng, m, r);
  return {std::move(a), std::move(b)};
}

/// sigma_k = CN^(-(r - k) / (r - 1)), k = 1..r: log-uniform from 1/CN up to 1.
inline Vector conditioned_spectrum(Index r, double condition_number) {
  if (r < 1) throw DimensionError("conditioned_spectrum: rank must be positive");
  if (!(condition_number >= 1.0) || !std::isfinite(condition_number)) {
    throw ConfigError("conditioned_spectrum: condition number must be >= 1");
  }
  if (r == 1) {
    if (condition_number > 1.0) throw ConfigError("conditioned_spectrum: rank 1 cannot realize a condition number > 1");
    return Vector::Ones(1);
  }
  Vector s(r);
  const double decades = std::log10(condition_number);
  for (Index k = 1; k <= r; ++k) {
    s(k - 1) = std::pow(10.0, -decades * static_cast<double>(r - k) / static_cast<double>(r - 1));
  }
  return s;
}

/// A = U diag(sigma), B = V with U, V polar factors of Gaussian matrices.
inline LowRankFactors synth_conditioned(Index n, Index m, Index r, double condition_number, std::uint64_t seed) {
  if (n < 1 || m < 1 || r < 1 || r > std::min(n, m)) throw DimensionError("synth_conditioned: need 1 <= r <= min(n, m)");
  const Vector s = conditioned_spectrum(r, condition_number);
  Rng rng(seed, streams::kFactors);
  Matrix u = polar_orthonormal_factor(detail::gaussian_matrix(rng, n, r));
  Matrix v = polar_orthonormal_factor(detail::gaussian_matrix(rng, m, r));
  return {u * s.asDiagonal(), std::move(v)};
}

/// Uniform pattern of exactly `count` distinct entries, values zero.
inline ObservedEntries sample_mask(Index n, Index m, std::uint64_t count, std::uint64_t seed) {
  if (n < 1 || m < 1) throw DimensionError("sample_mask: dimensions must be positive");
  const auto total = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(m);
  if (count < 1 || count > total) {
    std::ostringstream msg;
    msg << "sample_mask: count " << count << " outside [1, " << total << "]";
    throw ConfigError(msg.str());
  }
  Rng rng(seed, streams::kMask);
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(count));
  // Linear index i * m + j keeps the sample already in (row, col) order.
  for (std::uint64_t k : sample_without_replacement(total, count, rng)) {
    entries.push_back(Entry{static_cast<Index>(k / static_cast<std::uint64_t>(m)),
                            static_cast<Index>(k % static_cast<std::uint64_t>(m)), 0.0});
  }
  return ObservedEntries(n, m, std::move(entries));
}

/// Values of the target on a pattern.
inline ObservedEntries observe(const LowRankFactors& target, const ObservedEntries& pattern) {
  if (target.left.rows() != pattern.rows() || target.right.rows() != pattern.cols()) {
    throw DimensionError("observe: target and pattern dimensions differ");
  }
  std::vector<double> values;
  values.reserve(pattern.size());
  for (const Entry& e : pattern.entries()) values.push_back(target.entry(e.row, e.col));
  return pattern.with_values(values);
}

struct SyntheticSpec {
  Index n = 0;
  Index m = 0;
  Index r = 0;
  /// Empty: Gaussian factors. Set: prescribed log-uniform spectrum.
  std::optional<double> condition_number;
  double oversampling = 0.0;
  std::uint64_t seed = 0;

  std::uint64_t count() const { return sample_count(oversampling, n, m, r); }

  /// `allow_undersampling` admits OS <= 1 (recovery is then ill-posed).
  void validate(bool allow_undersampling = false) const {
    if (n < 1 || m < 1 || r < 1 || r > std::min(n, m)) throw ConfigError("SyntheticSpec: need 1 <= r <= min(n, m)");
    if (!(oversampling > 0.0) || !std::isfinite(oversampling)) throw ConfigError("SyntheticSpec: OS must be positive");
    if (!allow_undersampling && !(oversampling > 1.0)) {
      throw ConfigError("SyntheticSpec: OS must exceed 1 for recovery to be well posed");
    }
    if (condition_number) conditioned_spectrum(r, *condition_number);
    const double cells = static_cast<double>(n) * static_cast<double>(m);
    if (static_cast<double>(count()) > cells) {
      std::ostringstream msg;
      msg << "SyntheticSpec: OS " << oversampling << " needs " << count() << " samples but the matrix has only "
          << static_cast<std::uint64_t>(cells) << " entries";
      throw ConfigError(msg.str());
    }
    if (count() < 1) throw ConfigError("SyntheticSpec: OS yields no samples");
  }
};

struct SyntheticInstance {
  LowRankFactors target;
  ObservedEntries observed;
};

inline LowRankFactors synth_target(const SyntheticSpec& spec) {
  return spec.condition_number ? synth_conditioned(spec.n, spec.m, spec.r, *spec.condition_number, spec.seed)
                               : synth_gaussian(spec.n, spec.m, spec.r, spec.seed);
}

inline SyntheticInstance generate(const SyntheticSpec& spec, bool allow_undersampling = false) {
  spec.validate(allow_undersampling);
  LowRankFactors target = synth_target(spec);
  ObservedEntries observed = observe(target, sample_mask(spec.n, spec.m, spec.count(), spec.seed));
  return {std::move(target), std::move(observed)};
}

struct HeldOutInstance {
  LowRankFactors target;
  ObservedEntries observed;
  ObservedEntries heldout;
};

/// Like generate(), plus `heldout` further target entries disjoint from the
/// observed ones. The |Omega| + heldout cells are drawn together, then the
/// held-out subset is chosen uniformly among them.
inline HeldOutInstance generate_with_heldout(const SyntheticSpec& spec, std::uint64_t heldout,
                                             bool allow_undersampling = false) {
  spec.validate(allow_undersampling);
  const std::uint64_t count = spec.count();
  const auto cells = static_cast<std::uint64_t>(spec.n) * static_cast<std::uint64_t>(spec.m);
  if (count + heldout > cells) throw ConfigError("generate_with_heldout: observed plus held-out entries exceed n * m");
  LowRankFactors target = synth_target(spec);
  const ObservedEntries all = observe(target, sample_mask(spec.n, spec.m, count + heldout, spec.seed));
  Rng rng(spec.seed, streams::kSplit);
  std::vector<char> is_heldout(all.size(), 0);
  for (std::uint64_t k : sample_without_replacement(all.size(), heldout, rng)) is_heldout[k] = 1;
  std::vector<Entry> kept;
  std::vector<Entry> held;
  for (std::size_t k = 0; k < all.size(); ++k) (is_heldout[k] ? held : kept).push_back(all[k]);
  return {std::move(target), ObservedEntries(spec.n, spec.m, std::move(kept)),
          ObservedEntries(spec.n, spec.m, std::move(held))};
}

}  // namespace r3mc
