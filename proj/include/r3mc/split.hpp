#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "r3mc/errors.hpp"
#include "r3mc/problem.hpp"
#include "r3mc/rng.hpp"

namespace r3mc {

struct DataSplit {
  ObservedEntries train;
  ObservedEntries validation;
  ObservedEntries test;
};

/// Random disjoint partition with sizes round(f0 N), round(f1 N) and the rest.
inline DataSplit split_train_val_test(const ObservedEntries& all, const std::array<double, 3>& fractions,
                                      std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split_train_val_test: fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split_train_val_test: fractions must sum to 1");

  const std::size_t n = all.size();
  std::size_t n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  std::size_t n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, streams::kSplit);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }

  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<Entry> part;
    part.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) part.push_back(all[order[k]]);
    return ObservedEntries(all.rows(), all.cols(), std::move(part));
  };
  return DataSplit{take(0, n_train), take(n_train, n_train + n_val), take(n_train + n_val, n)};
}

}  // namespace r3mc
