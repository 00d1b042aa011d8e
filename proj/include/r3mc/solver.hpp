#pragma once

// Riemannian nonlinear conjugate gradient for fixed-rank matrix completion,
// plus the rank-one homotopy and the truncated-column warm start.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "r3mc/errors.hpp"
#include "r3mc/manifold.hpp"
#include "r3mc/problem.hpp"
#include "r3mc/rng.hpp"
#include "r3mc/smallmat.hpp"

namespace r3mc {

struct SolverConfig {
  int max_iterations = 500;
  double cost_tolerance = 1e-20;
  /// Relative to the gradient norm at the first iterate.
  double gradient_norm_tolerance = 1e-14;
  double armijo_slope = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 25;
  int verbosity = 0;
  /// When false every trace row records time 0 (byte-reproducible traces).
  bool record_time = true;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("SolverConfig: max_iterations must be >= 1");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
      throw ConfigError("SolverConfig: backtrack_factor must lie in (0, 1)");
    }
    if (!(armijo_slope > 0.0 && armijo_slope < 1.0)) throw ConfigError("SolverConfig: armijo_slope must lie in (0, 1)");
    if (!(cost_tolerance >= 0.0) || !(gradient_norm_tolerance >= 0.0)) {
      throw ConfigError("SolverConfig: tolerances must be non-negative");
    }
    if (max_backtracks < 0) throw ConfigError("SolverConfig: max_backtracks must be >= 0");
  }
};

enum class Termination {
  kCostTolerance,
  kGradientTolerance,
  kLineSearchStall,
  kMaxIterations,
  kMonitorStop,
};

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kCostTolerance:
      return "cost-tolerance";
    case Termination::kGradientTolerance:
      return "gradient-tolerance";
    case Termination::kLineSearchStall:
      return "line-search-stall";
    case Termination::kMaxIterations:
      return "max-iterations";
    case Termination::kMonitorStop:
      return "monitor-stop";
  }
  return "unknown";
}

inline bool is_convergence(Termination t) {
  return t == Termination::kCostTolerance || t == Termination::kGradientTolerance;
}

/// One row per visited iterate. `step`, `backtracks` and `reset` describe the
/// move taken from this iterate (zero on the final row).
struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;
  int backtracks = 0;
  bool reset = false;
  double time_s = 0.0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct SolverTrace {
  std::vector<IterationRecord> iterations;
  Termination reason = Termination::kMaxIterations;
};

struct SolveResult {
  FixedRankPoint point;
  SolverTrace trace;
};

/// Called once per iterate, after its cost and gradient are known; returning
/// true stops the run with Termination::kMonitorStop.
using IterationMonitor = std::function<bool(const IterationRecord&, const FixedRankPoint&)>;

/// PR+ coefficient max(0, <g_new, g_new - T g_prev> / |g_prev|^2).
inline double pr_plus_beta(const FixedRankPoint& x, const HorizontalVector& grad_new,
                           const HorizontalVector& grad_prev_transported, double grad_prev_norm_sq) {
  if (!(grad_prev_norm_sq > 0.0)) {
    throw ContractViolation("pr_plus_beta: previous gradient norm must be positive");
  }
  const double numerator = metric(x, grad_new, grad_new) - metric(x, grad_new, grad_prev_transported);
  return std::max(0.0, numerator / grad_prev_norm_sq);
}

namespace detail {

struct LineSearchOutcome {
  std::optional<FixedRankPoint> point;
  Evaluation evaluation;
  double step = 0.0;
  int backtracks = 0;
};

/// Armijo backtracking seeded by the linearized step.
inline LineSearchOutcome armijo_search(const CompletionProblem& problem, const FixedRankPoint& x, double fx,
                                       const HorizontalVector& eta, double slope, double seed_step,
                                       const SolverConfig& config) {
  LineSearchOutcome out;
  double s = seed_step;
  for (int k = 0; k <= config.max_backtracks; ++k, s *= config.backtrack_factor) {
    out.backtracks = k;
    try {
      FixedRankPoint y = retract(x, eta, s);
      Evaluation ev = evaluate(problem, y);
      if (std::isfinite(ev.cost) && ev.cost <= fx + config.armijo_slope * s * slope) {
        out.point.emplace(std::move(y));
        out.evaluation = std::move(ev);
        out.step = s;
        return out;
      }
    } catch (const RetractionFailure&) {
      // shrink and retry
    }
  }
  return out;
}

inline double seed_step(const CompletionProblem& problem, const FixedRankPoint& x, const HorizontalVector& eta,
                        bool& usable) {
  const LinearizedStep ls = initial_step(problem, x, eta);
  if (ls.status == LinearizedStep::Status::kDegenerate) {
    usable = true;
    return 1.0;
  }
  usable = ls.status == LinearizedStep::Status::kOk && ls.step > 0.0 && std::isfinite(ls.step);
  return ls.step;
}

}  // namespace detail

/// Riemannian conjugate gradient (PR+) from x0. Returns the best-cost iterate.
inline SolveResult cg_solve(const CompletionProblem& problem, FixedRankPoint x0, const SolverConfig& config,
                            const IterationMonitor& monitor = {}) {
  config.validate();
  if (x0.rank() != problem.rank() || x0.rows() != problem.rows() || x0.cols() != problem.cols()) {
    throw DimensionError("cg_solve: starting point does not match the problem dimensions / rank");
  }
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] {
    return config.record_time ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
  };

  FixedRankPoint x = std::move(x0);
  Evaluation ev = evaluate(problem, x);
  SolverTrace trace;

  std::optional<HorizontalVector> prev_grad;
  std::optional<HorizontalVector> prev_dir;
  double prev_grad_norm_sq = 0.0;
  double first_grad_norm = -1.0;

  for (int it = 0;; ++it) {
    const HorizontalVector grad = riemannian_gradient(x, residual_from(problem, ev));
    const double grad_norm_sq = metric(x, grad, grad);
    const double grad_norm = std::sqrt(std::max(0.0, grad_norm_sq));
    if (first_grad_norm < 0.0) first_grad_norm = grad_norm;

    IterationRecord rec;
    rec.iteration = it;
    rec.cost = ev.cost;
    rec.gradient_norm = grad_norm;
    rec.time_s = elapsed();

    auto finish = [&](Termination why) {
      trace.iterations.push_back(rec);
      trace.reason = why;
      return SolveResult{std::move(x), std::move(trace)};
    };

    if (ev.cost <= config.cost_tolerance) return finish(Termination::kCostTolerance);
    if (grad_norm == 0.0 || grad_norm <= config.gradient_norm_tolerance * first_grad_norm) {
      return finish(Termination::kGradientTolerance);
    }
    if (monitor && monitor(rec, x)) return finish(Termination::kMonitorStop);
    if (it >= config.max_iterations) return finish(Termination::kMaxIterations);

    const HorizontalVector steepest = -grad;
    HorizontalVector eta = steepest;
    bool reset = true;
    if (prev_grad && prev_dir) {
      const HorizontalVector grad_t = transport_to(x, *prev_grad);
      const double beta = pr_plus_beta(x, grad, grad_t, prev_grad_norm_sq);
      eta = steepest + beta * transport_to(x, *prev_dir);
      reset = false;
    }
    double slope = metric(x, grad, eta);
    if (!(slope < 0.0)) {
      eta = steepest;
      slope = -grad_norm_sq;
      reset = true;
    }

    bool usable = false;
    double s0 = detail::seed_step(problem, x, eta, usable);
    if (!usable && !reset) {
      eta = steepest;
      slope = -grad_norm_sq;
      reset = true;
      s0 = detail::seed_step(problem, x, eta, usable);
    }
    detail::LineSearchOutcome ls;
    if (usable) ls = detail::armijo_search(problem, x, ev.cost, eta, slope, s0, config);
    if (!ls.point && !reset) {
      eta = steepest;
      slope = -grad_norm_sq;
      reset = true;
      s0 = detail::seed_step(problem, x, eta, usable);
      if (usable) ls = detail::armijo_search(problem, x, ev.cost, eta, slope, s0, config);
    }
    if (!ls.point) return finish(Termination::kLineSearchStall);

    rec.step = ls.step;
    rec.backtracks = ls.backtracks;
    rec.reset = reset;
    trace.iterations.push_back(rec);
    if (config.verbosity > 0) {
      std::fprintf(stderr, "iter %4d  cost %.6e  |grad| %.3e  step %.3e%s\n", it, rec.cost, rec.gradient_norm,
                   rec.step, reset ? "  (reset)" : "");
    }

    prev_grad = grad;
    prev_grad_norm_sq = grad_norm_sq;
    prev_dir = eta;
    x = std::move(*ls.point);
    ev = std::move(ls.evaluation);
  }
}

/// Dominant singular triple of a sparse residual.
struct SingularTriple {
  double sigma = 0.0;
  Vector u;
  Vector v;
  int iterations = 0;
};

/// Power iteration on S^T S from a seed-fixed start; stops when the relative
/// change of the singular-value estimate drops below `tolerance`.
inline SingularTriple dominant_singular_triple(const SparseResidual& s, std::uint64_t seed = 0,
                                               double tolerance = 1e-8, int max_iterations = 200) {
  const ObservedEntries& p = *s.pattern;
  Rng rng(seed, streams::kPowerIteration);
  Vector v(p.cols());
  for (Index j = 0; j < v.size(); ++j) v(j) = rng.normal();
  v.normalize();
  SingularTriple out{0.0, Vector::Zero(p.rows()), v, 0};
  double previous = -1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Vector u = Vector::Zero(p.rows());
    for (std::size_t k = 0; k < p.size(); ++k) u(p[k].row) += s.values[k] * v(p[k].col);
    const double un = u.norm();
    if (!(un > 0.0)) {
      out.sigma = 0.0;
      out.iterations = it;
      return out;
    }
    u /= un;
    Vector w = Vector::Zero(p.cols());
    for (std::size_t k : p.column_order()) w(p[k].col) += s.values[k] * u(p[k].row);
    const double sigma = w.norm();
    kernel_counters().sparse_flops += 4 * p.size();
    out.u = u;
    out.sigma = sigma;
    out.iterations = it;
    if (sigma > 0.0) {
      v = w / sigma;
      out.v = v;
    }
    if (previous >= 0.0 && std::abs(sigma - previous) <= tolerance * sigma) break;
    previous = sigma;
  }
  return out;
}

struct RankOneUpdate {
  FixedRankPoint point;
  SingularTriple triple;
  double scale = 1.0;  // multiplier on -sigma u v^T (1 unless line search is on)
  bool degenerate = false;
  std::vector<std::string> warnings;
};

namespace detail {

/// Appends direction d to the orthonormal columns of basis (Gram-Schmidt,
/// twice). Falls back to a random complement direction when d lies in the span.
inline Matrix append_orthonormal(const Matrix& basis, const Vector& d, Rng& rng, bool& degenerate) {
  Vector w = d;
  if (basis.cols() > 0) {
    w -= basis * (basis.transpose() * w);
    w -= basis * (basis.transpose() * w);
  }
  double nw = w.norm();
  degenerate = !(nw > 1e-10 * std::max(1.0, d.norm()));
  while (degenerate && !(nw > 1e-10)) {
    for (Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
    if (basis.cols() > 0) {
      w -= basis * (basis.transpose() * w);
      w -= basis * (basis.transpose() * w);
    }
    nw = w.norm();
  }
  Matrix out(basis.rows(), basis.cols() + 1);
  out.leftCols(basis.cols()) = basis;
  out.col(basis.cols()) = w / nw;
  return out;
}

/// Exact minimizer t of ||e - t sigma P_Omega(u v^T)||^2.
inline double rank_one_scale(const CompletionProblem& problem, const Evaluation& ev, const SingularTriple& t) {
  double ed = 0.0;
  double dd = 0.0;
  const ObservedEntries& obs = problem.observed();
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double d = t.sigma * t.u(obs[k].row) * t.v(obs[k].col);
    ed += ev.residual[k] * d;
    dd += d * d;
  }
  kernel_counters().sparse_flops += 5 * obs.size();
  return dd > 0.0 && ed > 0.0 ? ed / dd : 1.0;
}

}  // namespace detail

/// Below this sigma(S) / sigma_max(R) the literal update is rescaled.
inline constexpr double kRankUpdateMinRatio = 1.5e-8;

/// Rank r -> r + 1 update U+ R+ V+^T = U R V^T - sigma u v^T along the dominant
/// singular triple of the residual S.
inline RankOneUpdate rank_one_update(const CompletionProblem& problem, const FixedRankPoint& x,
                                     std::uint64_t seed = 0, bool line_search = false) {
  if (x.rank() + 1 > std::min(x.rows(), x.cols())) throw DimensionError("rank_one_update: rank would exceed min(n, m)");
  const Evaluation ev = evaluate(problem, x);
  const SingularTriple t = dominant_singular_triple(residual_from(problem, ev), seed);
  if (!(t.sigma > 0.0)) throw ContractViolation("rank_one_update: residual is zero, nothing to add");
  double scale = line_search ? detail::rank_one_scale(problem, ev, t) : 1.0;
  std::vector<std::string> warnings;
  if (!line_search && t.sigma < kRankUpdateMinRatio * x.core_svd().singular(0)) {
    scale = detail::rank_one_scale(problem, ev, t);
    std::ostringstream msg;
    msg << "rank_one_update: sigma/sigma_max(R) = " << t.sigma / x.core_svd().singular(0)
        << " would leave R+ numerically singular; rescaled by the exact 1-D minimizer (" << scale << ")";
    warnings.push_back(msg.str());
  }
  const double sigma = scale * t.sigma;

  Rng rng(seed, streams::kRankUpdate);
  bool deg_u = false;
  bool deg_v = false;
  const Matrix u_plus = detail::append_orthonormal(x.U(), t.u, rng, deg_u);
  const Matrix v_plus = detail::append_orthonormal(x.V(), t.v, rng, deg_v);
  const Vector a = u_plus.transpose() * t.u;
  const Vector b = v_plus.transpose() * t.v;
  Matrix r_plus = (u_plus.transpose() * x.U()) * x.R() * (x.V().transpose() * v_plus) - sigma * a * b.transpose();

  RankOneUpdate out{FixedRankPoint(x), t, scale, deg_u || deg_v, std::move(warnings)};
  if (out.degenerate) {
    // The new column/row of R+ vanishes; keep the point valid with a tiny entry.
    const Index k = x.rank();
    const double floor = 1e-8 * x.core_svd().singular(0);
    if (std::abs(r_plus(k, k)) < floor) r_plus(k, k) = floor;
    out.warnings.emplace_back(
        "rank_one_update: dominant singular vector lies in the current subspace; added a random complement direction");
  }
  out.point = FixedRankPoint(u_plus, std::move(r_plus), v_plus);
  return out;
}

/// Rank-one point -sigma u v^T built from the residual of the zero matrix.
inline RankOneUpdate rank_one_start(const CompletionProblem& problem, std::uint64_t seed = 0,
                                    bool line_search = false) {
  const ObservedEntries& obs = problem.observed();
  Evaluation ev;
  ev.residual.resize(obs.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    ev.residual[k] = -obs[k].value;
    sum += obs[k].value * obs[k].value;
  }
  ev.cost = sum / static_cast<double>(obs.size());
  const SingularTriple t = dominant_singular_triple(residual_from(problem, ev), seed);
  if (!(t.sigma > 0.0)) throw ContractViolation("rank_one_start: all observed values are zero");
  const double scale = line_search ? detail::rank_one_scale(problem, ev, t) : 1.0;
  Matrix r(1, 1);
  r(0, 0) = -scale * t.sigma;
  return RankOneUpdate{FixedRankPoint(Matrix(t.u), std::move(r), Matrix(t.v)), t, scale, false, {}};
}

/// Early stop on held-out error and/or a training-cost plateau. Keeps the
/// iterate with the lowest validation error seen so far.
class StallMonitor {
 public:
  /// `plateau_window` 0 disables the plateau rule; a null `validation` disables the validation rule.
  StallMonitor(std::shared_ptr<const ObservedEntries> validation, int validation_window, double plateau_tolerance,
               int plateau_window)
      : validation_(std::move(validation)),
        validation_window_(validation_window),
        plateau_tolerance_(plateau_tolerance),
        plateau_window_(plateau_window) {
    if (validation_ && validation_->empty()) throw ConfigError("StallMonitor: validation set is empty");
    if (validation_window_ < 1 || plateau_window_ < 0) throw ConfigError("StallMonitor: invalid window");
  }

  bool operator()(const IterationRecord& rec, const FixedRankPoint& y) {
    costs_.push_back(rec.cost);
    if (validation_) {
      const double mse = mean_square_error(*validation_, y);
      if (mse < best_mse_) {
        best_mse_ = mse;
        best_.emplace(y);
      }
      increases_ = mse > last_mse_ ? increases_ + 1 : 0;
      last_mse_ = mse;
      if (increases_ >= validation_window_) return true;
    }
    const auto w = static_cast<std::size_t>(plateau_window_);
    if (w > 0 && costs_.size() > w) {
      const double old = costs_[costs_.size() - 1 - w];
      if (old - rec.cost < plateau_tolerance_ * old) return true;
    }
    return false;
  }

  /// The better of `final_point` and the best validated iterate, with its validation error.
  std::pair<FixedRankPoint, double> select(FixedRankPoint final_point) const {
    if (!validation_) return {std::move(final_point), std::numeric_limits<double>::quiet_NaN()};
    const double final_mse = mean_square_error(*validation_, final_point);
    if (best_ && best_mse_ < final_mse) return {*best_, best_mse_};
    return {std::move(final_point), final_mse};
  }

 private:
  std::shared_ptr<const ObservedEntries> validation_;
  int validation_window_;
  double plateau_tolerance_;
  int plateau_window_;
  std::vector<double> costs_;
  std::optional<FixedRankPoint> best_;
  double best_mse_ = std::numeric_limits<double>::infinity();
  double last_mse_ = std::numeric_limits<double>::infinity();
  int increases_ = 0;
};

/// Homotopy over the rank: fit, then grow by one along the residual's dominant direction.
struct RankSchedule {
  Index start_rank = 1;
  Index max_rank = 1;
  /// Held-out entries used to stop each rank and to pick the final one; may be null.
  std::shared_ptr<const ObservedEntries> validation;
  int validation_window = 5;
  double plateau_tolerance = 1e-6;
  int plateau_window = 10;
  bool rank_update_line_search = false;
  std::uint64_t seed = 0;
};

struct RankStage {
  Index rank = 0;
  SolverTrace trace;
  double train_cost = 0.0;
  double validation_mse = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;
  std::optional<FixedRankPoint> point;  // iterate kept at this rank
};

struct RankSolveResult {
  FixedRankPoint point;
  Index selected_rank = 0;
  std::vector<RankStage> stages;
  std::vector<std::string> warnings;
};

inline RankSolveResult rank_incremental_solve(const CompletionProblem& problem, const RankSchedule& schedule,
                                              const SolverConfig& config) {
  config.validate();
  const Index limit = std::min(problem.rows(), problem.cols());
  if (schedule.start_rank < 1 || schedule.start_rank > schedule.max_rank || schedule.max_rank > limit) {
    throw ConfigError("RankSchedule: need 1 <= start <= max <= min(n, m)");
  }
  const ObservedEntries* validation = schedule.validation.get();
  if (validation != nullptr) {
    if (validation->empty()) throw ConfigError("RankSchedule: validation set is empty");
    if (validation->rows() != problem.rows() || validation->cols() != problem.cols()) {
      throw DimensionError("RankSchedule: validation set dimensions differ from the training set");
    }
    if (!disjoint_patterns(*validation, problem.observed())) {
      throw ConfigError("RankSchedule: validation entries overlap the training entries");
    }
  }
  if (schedule.validation_window < 1 || schedule.plateau_window < 1) {
    throw ConfigError("RankSchedule: windows must be >= 1");
  }

  std::vector<std::string> warnings;
  RankOneUpdate seed_point = rank_one_start(problem.with_rank(1), schedule.seed, schedule.rank_update_line_search);
  FixedRankPoint x = std::move(seed_point.point);
  while (x.rank() < schedule.start_rank) {
    RankOneUpdate up = rank_one_update(problem.with_rank(x.rank()), x, schedule.seed, schedule.rank_update_line_search);
    warnings.insert(warnings.end(), up.warnings.begin(), up.warnings.end());
    x = std::move(up.point);
  }

  std::vector<RankStage> stages;
  std::optional<FixedRankPoint> best_point;
  double best_validation = std::numeric_limits<double>::infinity();

  for (;;) {
    const CompletionProblem at_rank = problem.with_rank(x.rank());
    StallMonitor monitor(schedule.validation, schedule.validation_window, schedule.plateau_tolerance,
                         schedule.plateau_window);
    SolveResult run = cg_solve(at_rank, std::move(x), config, std::ref(monitor));
    RankStage stage;
    stage.rank = at_rank.rank();
    stage.trace = std::move(run.trace);
    FixedRankPoint chosen = std::move(run.point);
    if (validation != nullptr) {
      std::tie(chosen, stage.validation_mse) = monitor.select(std::move(chosen));
    }
    stage.train_cost = cost(at_rank, chosen);
    stage.point.emplace(chosen);

    const bool improved = validation == nullptr || stage.validation_mse < best_validation;
    stage.accepted = improved;
    stages.push_back(std::move(stage));
    if (!improved) break;  // validation error went up: keep the previous rank
    best_validation = stages.back().validation_mse;
    best_point.emplace(chosen);

    if (chosen.rank() >= schedule.max_rank || stages.back().train_cost <= config.cost_tolerance) break;
    try {
      RankOneUpdate up = rank_one_update(at_rank, chosen, schedule.seed, schedule.rank_update_line_search);
      warnings.insert(warnings.end(), up.warnings.begin(), up.warnings.end());
      x = std::move(up.point);
    } catch (const Error& e) {
      warnings.emplace_back(std::string("rank_incremental_solve: stopping, rank update failed: ") + e.what());
      break;
    }
  }

  const Index selected = best_point->rank();
  return RankSolveResult{std::move(*best_point), selected, std::move(stages), std::move(warnings)};
}

/// OS of the n x p truncated problem: OS * alpha / (1 + alpha), alpha = p / n.
inline double truncated_oversampling(double oversampling, double alpha) { return oversampling * alpha / (1.0 + alpha); }

struct WarmStart {
  FixedRankPoint point;
  SolverTrace truncated_trace;
  std::vector<Index> columns;  // selected columns (of the n <= m orientation)
  std::vector<std::string> warnings;
};

/// Initialization for rectangular problems: solve on p random columns to get
/// the left subspace U, fit every column by damped least squares with U fixed
/// (W = argmin over r x m), then W^T = Q T gives V = Q, R = T^T.
inline WarmStart truncated_warm_start(const CompletionProblem& problem, Index p, const SolverConfig& config,
                                      std::uint64_t seed) {
  if (problem.rows() > problem.cols()) {
    const CompletionProblem flipped(problem.observed().transposed(), problem.rank());
    WarmStart w = truncated_warm_start(flipped, p, config, seed);
    FixedRankPoint x(w.point.V(), w.point.R().transpose(), w.point.U());
    return WarmStart{std::move(x), std::move(w.truncated_trace), std::move(w.columns), std::move(w.warnings)};
  }
  const Index n = problem.rows();
  const Index m = problem.cols();
  const Index r = problem.rank();
  if (p < r || p > m) throw ConfigError("truncated_warm_start: need rank <= p <= m columns");
  std::vector<std::string> warnings;

  const double dof = static_cast<double>(n * r + m * r - r * r);
  const double os = static_cast<double>(problem.observed().size()) / dof;
  const double os_trunc = truncated_oversampling(os, static_cast<double>(p) / static_cast<double>(n));
  if (!(os_trunc > 1.0)) {
    std::ostringstream msg;
    msg << "truncated_warm_start: truncated over-sampling " << os_trunc << " <= 1, the subproblem is under-determined";
    warnings.push_back(msg.str());
  }

  Rng rng(seed, streams::kColumns);
  std::vector<Index> columns;
  std::vector<Index> remap(static_cast<std::size_t>(m), -1);
  for (std::uint64_t j : sample_without_replacement(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(p), rng)) {
    remap[j] = static_cast<Index>(columns.size());
    columns.push_back(static_cast<Index>(j));
  }
  std::vector<Entry> sub;
  for (const Entry& e : problem.observed().entries()) {
    const Index c = remap[static_cast<std::size_t>(e.col)];
    if (c >= 0) sub.push_back(Entry{e.row, c, e.value});
  }
  if (sub.empty()) throw ConfigError("truncated_warm_start: selected columns contain no observed entries");
  const CompletionProblem truncated(ObservedEntries(n, p, std::move(sub)), r);
  SolveResult inner = cg_solve(truncated, random_point(n, p, r, seed), config);
  const Matrix& u = inner.point.U();

  // Column-wise damped normal equations (U_j^T U_j + 1e-10 I) w_j = U_j^T x_j.
  const ObservedEntries& obs = problem.observed();
  std::vector<Matrix> gram(static_cast<std::size_t>(m), Matrix::Zero(r, r));
  Matrix rhs = Matrix::Zero(r, m);
  std::vector<Index> counts(static_cast<std::size_t>(m), 0);
  const Matrix ut = u.transpose();
  for (const Entry& e : obs.entries()) {
    auto ui = ut.col(e.row);
    gram[static_cast<std::size_t>(e.col)].noalias() += ui * ui.transpose();
    rhs.col(e.col).noalias() += e.value * ui;
    ++counts[static_cast<std::size_t>(e.col)];
  }
  kernel_counters().sparse_flops += static_cast<std::uint64_t>(2 * r * r + 2 * r) * obs.size();
  Matrix w = Matrix::Zero(r, m);
  Index empty_columns = 0;
  for (Index j = 0; j < m; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0) {
      ++empty_columns;
      continue;
    }
    Matrix g = gram[static_cast<std::size_t>(j)];
    g.diagonal().array() += 1e-10;
    w.col(j) = g.llt().solve(rhs.col(j));
  }
  if (empty_columns > 0) {
    warnings.push_back("truncated_warm_start: " + std::to_string(empty_columns) +
                       " column(s) without observed entries set to zero");
  }

  // Thin QR of W^T.
  const Eigen::HouseholderQR<Matrix> qr(w.transpose());
  Matrix q = qr.householderQ() * Matrix::Identity(m, r);
  Matrix t = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  FixedRankPoint x(u, t.transpose(), std::move(q));
  return WarmStart{std::move(x), std::move(inner.trace), std::move(columns), std::move(warnings)};
}

}  // namespace r3mc
