#include <gtest/gtest.h>

#include <algorithm>
#include <memory>

#include "oracles.hpp"
#include "r3mc/errors.hpp"
#include "r3mc/solver.hpp"
#include "r3mc/synthetic.hpp"

using namespace r3mc;

namespace {

CompletionProblem gaussian_problem(Index n, Index m, Index r, double os, std::uint64_t seed) {
  SyntheticSpec spec{n, m, r, std::nullopt, os, seed};
  return CompletionProblem(generate(spec).observed, r);
}

SolverConfig quiet(int iters = 300) {
  SolverConfig c;
  c.max_iterations = iters;
  c.record_time = false;
  return c;
}

}  // namespace

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.backtrack_factor = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.armijo_slope = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Termination, Names) {
  EXPECT_EQ(to_string(Termination::kCostTolerance), "cost-tolerance");
  EXPECT_EQ(to_string(Termination::kLineSearchStall), "line-search-stall");
  EXPECT_TRUE(is_convergence(Termination::kGradientTolerance));
  EXPECT_FALSE(is_convergence(Termination::kMaxIterations));
}

TEST(PrPlusBeta, ClampedAtZero) {
  const FixedRankPoint x = random_point(10, 8, 2, 1);
  const HorizontalVector g = random_horizontal(x, 2);
  EXPECT_EQ(pr_plus_beta(x, g, g, 1.0), 0.0);
  EXPECT_NEAR(pr_plus_beta(x, g, 2.0 * g, 1.0), 0.0, 0.0);
  EXPECT_NEAR(pr_plus_beta(x, g, -1.0 * g, 0.5), 4.0 * metric(x, g, g), 1e-12);
  EXPECT_THROW(pr_plus_beta(x, g, g, 0.0), ContractViolation);
}

TEST(CgSolve, TraceIsMonotoneAndSatisfiesArmijo) {
  const CompletionProblem p = gaussian_problem(60, 50, 3, 3.0, 11);
  const SolveResult res = cg_solve(p, random_point(60, 50, 3, 12), quiet(200));
  const auto& it = res.trace.iterations;
  ASSERT_GE(it.size(), 2u);
  EXPECT_TRUE(it.front().reset);
  for (std::size_t k = 0; k + 1 < it.size(); ++k) {
    EXPECT_EQ(it[k].iteration, static_cast<int>(k));
    EXPECT_GT(it[k].step, 0.0);
    EXPECT_LE(it[k].backtracks, 25);
    EXPECT_LT(it[k + 1].cost, it[k].cost);
  }
  EXPECT_EQ(it.back().step, 0.0);
  EXPECT_TRUE(is_convergence(res.trace.reason));
  EXPECT_LE(cost(p, res.point), 1e-12);
  EXPECT_EQ(cost(p, res.point), it.back().cost);
}

TEST(CgSolve, RecoversTheTarget) {
  SyntheticSpec spec{80, 70, 4, std::nullopt, 4.0, 3};
  const HeldOutInstance inst = generate_with_heldout(spec, 500);
  const CompletionProblem p(inst.observed, 4);
  const SolveResult res = cg_solve(p, random_point(80, 70, 4, 9), quiet());
  EXPECT_LE(res.trace.iterations.back().cost, 1e-12);
  EXPECT_LE(mean_square_error(inst.heldout, res.point), 1e-10);
}

TEST(CgSolve, StopsAtIterationLimitAndMonitor) {
  const CompletionProblem p = gaussian_problem(40, 40, 3, 3.0, 5);
  const SolveResult capped = cg_solve(p, random_point(40, 40, 3, 6), quiet(3));
  EXPECT_EQ(capped.trace.reason, Termination::kMaxIterations);
  EXPECT_EQ(capped.trace.iterations.size(), 4u);

  int calls = 0;
  const SolveResult stopped =
      cg_solve(p, random_point(40, 40, 3, 6), quiet(), [&](const IterationRecord&, const FixedRankPoint&) {
        return ++calls == 5;
      });
  EXPECT_EQ(stopped.trace.reason, Termination::kMonitorStop);
  EXPECT_EQ(stopped.trace.iterations.size(), 5u);
  // Same path up to the cap.
  for (std::size_t k = 0; k < capped.trace.iterations.size(); ++k) {
    EXPECT_EQ(capped.trace.iterations[k].cost, stopped.trace.iterations[k].cost);
  }
}

TEST(CgSolve, RejectsMismatchedStart) {
  const CompletionProblem p = gaussian_problem(20, 20, 2, 3.0, 1);
  EXPECT_THROW(cg_solve(p, random_point(20, 20, 3, 1), quiet()), DimensionError);
}

TEST(CgSolve, FinalCostInvariantUnderGroupAction) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const CompletionProblem p = gaussian_problem(40, 30, 3, 3.0, seed);
    const FixedRankPoint x0 = random_point(40, 30, 3, seed + 40);
    Rng rng(seed, 77);
    const Matrix o1 = random_orthogonal(3, rng);
    const Matrix o2 = random_orthogonal(3, rng);
    const SolverConfig c = quiet(25);
    const double a = cg_solve(p, x0, c).trace.iterations.back().cost;
    const double b = cg_solve(p, group_action(x0, o1, o2), c).trace.iterations.back().cost;
    EXPECT_NEAR(a, b, 1e-8 * a);
  }
}

TEST(DominantSingularTriple, MatchesDenseSvd) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const CompletionProblem p(oracle::random_pattern(8, 6, 30, seed), 2);
    const SparseResidual s = residual(p, random_point(8, 6, 2, seed + 3));
    const Matrix e = oracle::dense_residual(p.observed(), random_point(8, 6, 2, seed + 3).dense()) *
                     (2.0 / static_cast<double>(p.observed().size()));
    const Eigen::JacobiSVD<Matrix> ref(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const SingularTriple t = dominant_singular_triple(s, seed);
    EXPECT_NEAR(t.sigma, ref.singularValues()(0), 1e-6 * ref.singularValues()(0));
    EXPECT_NEAR(std::abs(t.u.dot(ref.matrixU().col(0))), 1.0, 1e-4);
    EXPECT_NEAR(std::abs(t.v.dot(ref.matrixV().col(0))), 1.0, 1e-4);
    EXPECT_LE((e * t.v - t.sigma * t.u).norm(), 1e-4 * t.sigma);
  }
}

TEST(RankOneUpdate, ReconstructsTheUpdatedMatrix) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const CompletionProblem p = gaussian_problem(30, 25, 3, 3.0, seed);
    const FixedRankPoint x = random_point(30, 25, 2, seed + 9);
    const RankOneUpdate up = rank_one_update(p.with_rank(2), x, seed);
    ASSERT_EQ(up.point.rank(), 3);
    const double sigma = up.scale * up.triple.sigma;
    const Matrix want = x.dense() - sigma * up.triple.u * up.triple.v.transpose();
    EXPECT_LE((up.point.dense() - want).norm(), 1e-10 * (x.R().norm() + sigma));
    EXPECT_LE((up.point.U().transpose() * up.point.U() - Matrix::Identity(3, 3)).norm(), 1e-10);
    EXPECT_LE((up.point.V().transpose() * up.point.V() - Matrix::Identity(3, 3)).norm(), 1e-10);
  }
}

TEST(RankOneUpdate, LineSearchScaleDoesNotIncreaseCost) {
  const CompletionProblem p = gaussian_problem(30, 25, 3, 3.0, 4);
  const FixedRankPoint x = random_point(30, 25, 2, 4);
  const double before = cost(p.with_rank(2), x);
  const RankOneUpdate up = rank_one_update(p.with_rank(2), x, 4, true);
  EXPECT_LE(cost(p, up.point), before);
  const RankOneUpdate start = rank_one_start(p.with_rank(1), 4, true);
  EXPECT_EQ(start.point.rank(), 1);
  EXPECT_LE(cost(p.with_rank(1), start.point), oracle::dense_cost(p.observed(), Matrix::Zero(30, 25)));
}

TEST(RankOneUpdate, RejectsFullRank) {
  const CompletionProblem p(oracle::random_pattern(3, 3, 6, 1), 3);
  EXPECT_THROW(rank_one_update(p, random_point(3, 3, 3, 1), 1), Error);
}

TEST(RankIncremental, SelectsTheTrueRank) {
  SyntheticSpec spec{100, 100, 4, std::nullopt, 5.0, 21};
  const HeldOutInstance inst = generate_with_heldout(spec, 1000);
  RankSchedule s;
  s.start_rank = 1;
  s.max_rank = 8;
  s.validation = std::make_shared<ObservedEntries>(inst.heldout);
  s.seed = 21;
  SolverConfig c = quiet(300);
  c.cost_tolerance = 1e-14;
  const RankSolveResult res = rank_incremental_solve(CompletionProblem(inst.observed, 8), s, c);
  EXPECT_EQ(res.selected_rank, 4);
  EXPECT_LE(cost(CompletionProblem(inst.observed, 4), res.point), 1e-10);
  for (std::size_t k = 0; k < res.stages.size(); ++k) EXPECT_EQ(res.stages[k].rank, static_cast<Index>(k + 1));
}

TEST(RankIncremental, SingleRankIsAPlainSolve) {
  const CompletionProblem p = gaussian_problem(40, 40, 2, 4.0, 8);
  RankSchedule s;
  s.seed = 8;
  const RankSolveResult res = rank_incremental_solve(p.with_rank(1), s, quiet(50));
  ASSERT_EQ(res.stages.size(), 1u);
  EXPECT_EQ(res.selected_rank, 1);
  EXPECT_EQ(res.point.rank(), 1);
}

TEST(RankIncremental, RejectsOverlappingValidation) {
  const CompletionProblem p = gaussian_problem(30, 30, 2, 4.0, 8);
  RankSchedule s;
  s.max_rank = 3;
  s.validation = std::make_shared<ObservedEntries>(p.observed());
  EXPECT_THROW(rank_incremental_solve(p, s, quiet()), ConfigError);
  s.validation = std::make_shared<ObservedEntries>(ObservedEntries(30, 31, {{0, 0, 1.0}}));
  EXPECT_THROW(rank_incremental_solve(p, s, quiet()), Error);
}

TEST(StallMonitor, PlateauRule) {
  StallMonitor m(nullptr, 5, 1e-3, 2);
  const FixedRankPoint x = random_point(5, 5, 1, 1);
  IterationRecord rec;
  rec.cost = 1.0;
  EXPECT_FALSE(m(rec, x));
  rec.cost = 0.5;
  EXPECT_FALSE(m(rec, x));
  rec.cost = 0.49999;
  EXPECT_FALSE(m(rec, x));
  rec.cost = 0.49998;
  EXPECT_TRUE(m(rec, x));
  EXPECT_THROW(StallMonitor(nullptr, 0, 0.0, 0), ConfigError);
}

TEST(WarmStart, TruncatedOversamplingArithmetic) {
  EXPECT_DOUBLE_EQ(truncated_oversampling(5.0, 2.0), 10.0 / 3.0);
  EXPECT_DOUBLE_EQ(truncated_oversampling(5.0, 3.0), 3.75);
}

TEST(WarmStart, AllColumnsMatchesDirectSolve) {
  const CompletionProblem p = gaussian_problem(50, 80, 3, 5.0, 2);
  SolverConfig c = quiet(500);
  c.cost_tolerance = 1e-24;
  const WarmStart w = truncated_warm_start(p, 80, c, 2);
  const SolveResult direct = cg_solve(p, random_point(50, 80, 3, 2), c);
  EXPECT_LE((w.point.dense() - direct.point.dense()).norm(), 1e-8 * direct.point.dense().norm());
  EXPECT_EQ(w.columns.size(), 80u);
}

TEST(WarmStart, ProducesAGoodStartAndHandlesTallProblems) {
  const CompletionProblem p = gaussian_problem(40, 300, 3, 5.0, 7);
  const WarmStart w = truncated_warm_start(p, 120, quiet(), 7);
  EXPECT_TRUE(w.warnings.empty());
  EXPECT_LE(cost(p, w.point), 1e-6 * cost(p, random_point(40, 300, 3, 7)));

  const CompletionProblem t(p.observed().transposed(), 3);
  const WarmStart wt = truncated_warm_start(t, 120, quiet(), 7);
  EXPECT_EQ(wt.point.rows(), 300);
  EXPECT_LE((wt.point.dense().transpose() - w.point.dense()).norm(), 1e-12 * w.point.dense().norm());
}

TEST(WarmStart, RejectsBadColumnCount) {
  const CompletionProblem p = gaussian_problem(20, 40, 3, 4.0, 1);
  EXPECT_THROW(truncated_warm_start(p, 2, quiet(), 1), ConfigError);
  EXPECT_THROW(truncated_warm_start(p, 41, quiet(), 1), ConfigError);
}
