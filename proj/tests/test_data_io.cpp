#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "oracles.hpp"
#include "r3mc/errors.hpp"
#include "r3mc/io.hpp"
#include "r3mc/split.hpp"
#include "r3mc/synthetic.hpp"

using namespace r3mc;

namespace {

std::vector<std::pair<Index, Index>> coords(const ObservedEntries& e) {
  std::vector<std::pair<Index, Index>> out;
  for (const Entry& x : e.entries()) out.emplace_back(x.row, x.col);
  return out;
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_matrix_market(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Rng, DeterministicAndStreamSeparated) {
  Rng a(42, 3);
  Rng b(42, 3);
  Rng c(42, 4);
  int same = 0;
  for (int k = 0; k < 100; ++k) {
    const std::uint64_t x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    same += x == c.next_u64();
  }
  EXPECT_EQ(same, 0);
}

TEST(Rng, MomentsAndBounds) {
  Rng rng(7);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    const double u = rng.uniform();
    EXPECT_TRUE(u >= 0.0 && u < 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
  EXPECT_LT(std::abs(sum / n), 5.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(SampleWithoutReplacement, DistinctSortedAndExhaustive) {
  Rng rng(1);
  const auto s = sample_without_replacement(1000, 300, rng);
  ASSERT_EQ(s.size(), 300u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
  EXPECT_LT(s.back(), 1000u);
  const auto all = sample_without_replacement(5, 5, rng);
  EXPECT_EQ(all, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_TRUE(sample_without_replacement(5, 0, rng).empty());
  EXPECT_THROW(sample_without_replacement(5, 6, rng), ContractViolation);
}

TEST(SynthGaussian, DeterministicAndFullRank) {
  const LowRankFactors a = synth_gaussian(20, 15, 4, 9);
  const LowRankFactors b = synth_gaussian(20, 15, 4, 9);
  EXPECT_EQ(a.left, b.left);
  EXPECT_EQ(a.right, b.right);
  EXPECT_NE(a.left, synth_gaussian(20, 15, 4, 10).left);
  const Eigen::JacobiSVD<Matrix> svd(a.dense());
  EXPECT_GT(svd.singularValues()(3), 1e-6 * svd.singularValues()(0));
  EXPECT_LT(svd.singularValues()(4), 1e-10 * svd.singularValues()(0));
  EXPECT_DOUBLE_EQ(a.entry(3, 7), a.dense()(3, 7));
}

TEST(SynthGaussian, ColumnMeansAreSmall) {
  const Index n = 10000;
  const LowRankFactors f = synth_gaussian(n, 50, 3, 1);
  for (Index j = 0; j < 3; ++j) EXPECT_LT(std::abs(f.left.col(j).mean()), 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST(ConditionedSpectrum, ReproducesLogspace) {
  const Vector s = conditioned_spectrum(10, 100.0);
  for (Index k = 0; k < 10; ++k) EXPECT_NEAR(s(k), std::pow(10.0, -2.0 + 2.0 * static_cast<double>(k) / 9.0), 1e-15);
  EXPECT_NEAR(s(1), std::pow(10.0, -16.0 / 9.0), 1e-15);
  EXPECT_EQ(s(9), 1.0);
  EXPECT_TRUE(conditioned_spectrum(6, 1.0).isApproxToConstant(1.0, 0.0));
  const Vector w = conditioned_spectrum(7, 1e12);
  for (Index k = 1; k + 1 < 7; ++k) {
    EXPECT_NEAR(std::log(w(k + 1)) - std::log(w(k)), std::log(w(1)) - std::log(w(0)), 1e-12);
  }
  EXPECT_THROW(conditioned_spectrum(1, 10.0), ConfigError);
  EXPECT_NO_THROW(conditioned_spectrum(1, 1.0));
  EXPECT_THROW(conditioned_spectrum(3, 0.5), ConfigError);
}

TEST(SynthConditioned, SvdMatchesPrescription) {
  for (double cn : {1.0, 100.0, 1e6}) {
    const LowRankFactors f = synth_conditioned(60, 40, 5, cn, 3);
    const Eigen::JacobiSVD<Matrix> svd(f.dense());
    const Vector want = conditioned_spectrum(5, cn).reverse();
    for (Index k = 0; k < 5; ++k) EXPECT_NEAR(svd.singularValues()(k), want(k), 1e-10 * want(k));
    EXPECT_NEAR(svd.singularValues()(0) / svd.singularValues()(4), cn, 1e-10 * cn);
  }
}

TEST(SampleMask, EdgeCasesAndCounts) {
  const ObservedEntries full = sample_mask(4, 3, 12, 1);
  EXPECT_EQ(full.size(), 12u);
  const ObservedEntries one = sample_mask(4, 3, 1, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LT(one[0].row, 4);
  EXPECT_LT(one[0].col, 3);
  EXPECT_THROW(sample_mask(4, 3, 0, 1), ConfigError);
  EXPECT_THROW(sample_mask(4, 3, 13, 1), ConfigError);
  EXPECT_EQ(sample_mask(30, 30, 100, 5), sample_mask(30, 30, 100, 5));
  EXPECT_EQ(sample_count(2.1, 10000, 10000, 10), 419790u);
}

TEST(OsRatio, FormulaValues) {
  EXPECT_EQ(os_ratio(20 * 3 + 15 * 3 - 9, 20, 15, 3), 1.0);
  EXPECT_NEAR(os_ratio(419790, 10000, 10000, 10), 2.1, 1e-15);
  EXPECT_THROW(os_ratio(10, 5, 5, 6), DimensionError);
  for (double os : {1.3, 2.7, 4.0}) {
    const std::uint64_t c = sample_count(os, 37, 23, 4);
    EXPECT_LE(std::abs(os_ratio(c, 37, 23, 4) - os), 1.0 / degrees_of_freedom(37, 23, 4));
  }
}

TEST(SyntheticSpec, ValidationAndHeldOut) {
  SyntheticSpec spec{30, 20, 3, 100.0, 2.0, 4};
  const SyntheticInstance inst = generate(spec);
  EXPECT_EQ(inst.observed.size(), spec.count());
  for (const Entry& e : inst.observed.entries()) EXPECT_DOUBLE_EQ(e.value, inst.target.entry(e.row, e.col));

  const HeldOutInstance h = generate_with_heldout(spec, 50);
  EXPECT_EQ(h.observed.size(), spec.count());
  EXPECT_EQ(h.heldout.size(), 50u);
  EXPECT_TRUE(disjoint_patterns(h.observed, h.heldout));

  SyntheticSpec bad = spec;
  bad.oversampling = 0.9;
  EXPECT_THROW(generate(bad), ConfigError);
  EXPECT_NO_THROW(generate(bad, true));
  bad.oversampling = 50.0;
  EXPECT_THROW(generate(bad), ConfigError);
  bad = spec;
  bad.r = 31;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Split, SizesAndDegenerateFractions) {
  const ObservedEntries ten = oracle::random_pattern(5, 5, 10, 1);
  const DataSplit s = split_train_val_test(ten, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  const DataSplit all = split_train_val_test(ten, {1.0, 0.0, 0.0}, 3);
  EXPECT_EQ(all.train, ten);
  EXPECT_TRUE(all.validation.empty());
  EXPECT_TRUE(all.test.empty());
  EXPECT_THROW(split_train_val_test(ten, {0.5, 0.2, 0.2}, 1), ConfigError);
  EXPECT_THROW(split_train_val_test(ten, {1.2, -0.1, -0.1}, 1), ConfigError);
}

TEST(Split, DisjointCoverBySortedMerge) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ObservedEntries data = oracle::random_pattern(30, 40, 200 + seed * 7, seed);
    const DataSplit s = split_train_val_test(data, {0.7, 0.2, 0.1}, seed);
    const double n = static_cast<double>(data.size());
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - 0.7 * n), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(s.validation.size()) - 0.2 * n), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - 0.1 * n), 1.0);
    std::vector<std::pair<Index, Index>> merged;
    for (const ObservedEntries* part : {&s.train, &s.validation, &s.test}) {
      const auto c = coords(*part);
      std::vector<std::pair<Index, Index>> out;
      std::merge(merged.begin(), merged.end(), c.begin(), c.end(), std::back_inserter(out));
      merged = std::move(out);
    }
    EXPECT_EQ(std::adjacent_find(merged.begin(), merged.end()), merged.end());
    EXPECT_EQ(merged, coords(data));
    EXPECT_EQ(split_train_val_test(data, {0.7, 0.2, 0.1}, seed).test, s.test);
  }
}

TEST(MovieLens, ParsesAndReindexes) {
  std::istringstream in("1::1193::5::978300760\n\n7::3::4::978300761\r\n1::3::2.5\n");
  const RatingsDataset d = parse_movielens(in);
  ASSERT_EQ(d.ratings.size(), 3u);
  EXPECT_EQ(d.users(), 2);
  EXPECT_EQ(d.items(), 2);
  EXPECT_EQ(d.user_ids, (std::vector<std::int64_t>{1, 7}));
  EXPECT_EQ(d.item_ids, (std::vector<std::int64_t>{3, 1193}));
  EXPECT_EQ(d.ratings[0], (Rating{0, 1, 5.0, 978300760}));
  EXPECT_EQ(d.ratings[1], (Rating{1, 0, 4.0, 978300761}));
  EXPECT_EQ(d.ratings[2], (Rating{0, 0, 2.5, std::nullopt}));
  const ObservedEntries obs = d.to_observed();
  EXPECT_EQ(obs.rows(), 2);
  EXPECT_EQ(obs.size(), 3u);
}

TEST(MovieLens, RejectsMalformedLines) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_movielens(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("a::b::c::d\n"), 1u);
  EXPECT_EQ(line_of("1::2::3::4\n1::2\n"), 2u);
  EXPECT_EQ(line_of("1::2::3::4\n\n1::2::x::4\n"), 3u);
  EXPECT_EQ(line_of("1::2::3::4::5\n"), 1u);
  EXPECT_EQ(line_of("1::2::nan::4\n"), 1u);
  EXPECT_NE(line_of(""), 0u);
  EXPECT_NE(line_of("\n\n"), 0u);
}

TEST(MovieLens, RoundTrip) {
  Rng rng(3);
  std::ostringstream text;
  std::set<std::pair<int, int>> seen;
  for (int k = 0; k < 200; ++k) {
    const int u = 1 + static_cast<int>(rng.below(40));
    const int i = 1 + static_cast<int>(rng.below(500));
    if (!seen.insert({u, i}).second) continue;
    text << u << "::" << i << "::" << 1 + rng.below(5) << "::" << 978300000 + k << '\n';
  }
  std::istringstream in(text.str());
  const RatingsDataset d = parse_movielens(in);
  std::ostringstream out;
  write_movielens(out, d);
  EXPECT_EQ(out.str(), text.str());
  std::istringstream again(out.str());
  const RatingsDataset e = parse_movielens(again);
  EXPECT_EQ(e.ratings, d.ratings);
  EXPECT_EQ(e.user_ids, d.user_ids);
}

TEST(MatrixMarket, MinimalFileAndComments) {
  std::istringstream in("%%MatrixMarket matrix coordinate real general\n% comment\n3 4 1\n2 3 1.5\n");
  const ObservedEntries e = read_matrix_market(in);
  EXPECT_EQ(e.rows(), 3);
  EXPECT_EQ(e.cols(), 4);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0], (Entry{1, 2, 1.5}));
}

TEST(MatrixMarket, RoundTripIsLossless) {
  const ObservedEntries e = oracle::random_pattern(17, 23, 90, 5);
  std::stringstream s;
  write_matrix_market(s, e);
  EXPECT_EQ(read_matrix_market(s), e);

  Rng rng(2);
  const Matrix a = oracle::random_matrix(rng, 6, 4);
  std::stringstream d;
  write_matrix_market_dense(d, a);
  EXPECT_EQ(read_matrix_market_dense(d), a);
}

TEST(MatrixMarket, RejectsBadInput) {
  const std::string head = "%%MatrixMarket matrix coordinate real general\n";
  EXPECT_EQ(parse_error_line(head + "2 2 2\n1 1 1\n2 1 3\n1 1 4\n"), 5u);
  EXPECT_EQ(parse_error_line(head + "2 2 2\n1 1 1\n"), 3u);
  EXPECT_EQ(parse_error_line(head + "2 2 1\n3 1 1\n"), 3u);
  EXPECT_EQ(parse_error_line(head + "2 2 1\n1 1\n"), 3u);
  EXPECT_EQ(parse_error_line(head + "2 2 0\n"), 2u);
  EXPECT_NE(parse_error_line("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n"), 0u);
  EXPECT_NE(parse_error_line("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n"), 0u);
  EXPECT_NE(parse_error_line("1 1 1\n1 1 1\n"), 0u);

  std::istringstream dup(head + "2 2 2\n1 1 1\n1 1 4\n");
  try {
    read_matrix_market(dup);
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}
