#pragma once

// Command-line front end: synth, complete, bench and movielens-prep.
//
// Exit codes: 0 converged (cost / gradient tolerance, validation early stop,
// or a finished rank homotopy), 1 error, 2 iteration limit, 3 line-search stall.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "r3mc/errors.hpp"
#include "r3mc/io.hpp"
#include "r3mc/solver.hpp"
#include "r3mc/split.hpp"
#include "r3mc/synthetic.hpp"
#include "report.hpp"

namespace r3mc::cli {

enum ExitCode : int { kConverged = 0, kFailure = 1, kIterationLimit = 2, kStalled = 3 };

inline int exit_code_for(Termination t) {
  switch (t) {
    case Termination::kCostTolerance:
    case Termination::kGradientTolerance:
    case Termination::kMonitorStop:
      return kConverged;
    case Termination::kMaxIterations:
      return kIterationLimit;
    case Termination::kLineSearchStall:
      return kStalled;
  }
  return kFailure;
}

/// "--max-iters" -> "R3MC_MAX_ITERS".
inline std::string env_name(const std::string& flag) {
  std::string out = "R3MC_";
  for (char c : flag.substr(flag.find_first_not_of('-'))) {
    out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

template <class T>
CLI::Option* option(CLI::App* app, const std::string& flag, T& target, const std::string& help) {
  return app->add_option(flag, target, help)->envname(env_name(flag));
}

inline CLI::Option* flag(CLI::App* app, const std::string& name, bool& target, const std::string& help) {
  return app->add_flag(name, target, help)->envname(env_name(name));
}

/// Solver settings shared by complete and bench.
struct SolverOptions {
  int max_iters = 500;
  double cost_tol = 1e-20;
  double grad_tol = 1e-14;
  int max_backtracks = 25;
  std::string timing = "wall";
  bool verbose = false;

  void add_to(CLI::App* app) {
    option(app, "--max-iters", max_iters, "Iteration limit per solve")->check(CLI::PositiveNumber)->capture_default_str();
    option(app, "--cost-tol", cost_tol, "Stop when the cost falls to this value")->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    option(app, "--grad-tol", grad_tol, "Stop when |grad| falls below this fraction of its first value")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    option(app, "--max-backtracks", max_backtracks, "Armijo halvings per line search")->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    option(app, "--timing", timing, "wall: record elapsed time in traces; none: write 0 (reproducible bytes)")
        ->check(CLI::IsMember({"wall", "none"}))
        ->capture_default_str();
    flag(app, "--verbose", verbose, "Print one line per iteration to stderr");
  }

  SolverConfig config() const {
    SolverConfig c;
    c.max_iterations = max_iters;
    c.cost_tolerance = cost_tol;
    c.gradient_norm_tolerance = grad_tol;
    c.max_backtracks = max_backtracks;
    c.record_time = timing == "wall";
    c.verbosity = verbose ? 1 : 0;
    c.validate();
    return c;
  }

  Json echo() const {
    const SolverConfig c = config();
    return Json{{"max_iters", c.max_iterations},         {"cost_tol", c.cost_tolerance},
                {"grad_tol", c.gradient_norm_tolerance}, {"armijo_slope", c.armijo_slope},
                {"backtrack_factor", c.backtrack_factor}, {"max_backtracks", c.max_backtracks},
                {"timing", timing}};
  }
};

inline ObservedEntries load_entries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return read_matrix_market(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

inline void save_entries(const std::filesystem::path& path, const ObservedEntries& data) {
  write_atomically(path, [&](std::ostream& out) { write_matrix_market(out, data); });
}

inline void save_dense(const std::filesystem::path& path, const Matrix& a) {
  write_atomically(path, [&](std::ostream& out) { write_matrix_market_dense(out, a); });
}

inline void save_json(const std::filesystem::path& path, const Json& j) {
  write_atomically(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

inline std::vector<TraceRow> rows_of(const SolverTrace& trace, Index rank, int first_iter = 0) {
  std::vector<TraceRow> rows;
  rows.reserve(trace.iterations.size());
  for (IterationRecord r : trace.iterations) {
    r.iteration += first_iter;
    rows.push_back(TraceRow{rank, r});
  }
  return rows;
}

inline std::array<double, 3> parse_fractions(const std::vector<double>& f) {
  if (f.size() != 3) throw ConfigError("--fractions needs three comma-separated values");
  return {f[0], f[1], f[2]};
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Index n = 0;
  Index m = 0;
  Index rank = 0;
  double os = 0.0;
  std::optional<double> cn;
  std::uint64_t seed = 0;
  std::uint64_t heldout = 0;
  std::string out;
  bool force = false;
};

inline int run_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  SyntheticSpec spec{a.n, a.m == 0 ? a.n : a.m, a.rank, a.cn, a.os, a.seed};
  if (!(a.os > 1.0)) {
    if (!a.force) throw ConfigError("--os " + format_g17(a.os) + " <= 1 leaves recovery ill-posed (use --force)");
    err << "warning: OS " << a.os << " <= 1, proceeding because of --force\n";
  }
  const HeldOutInstance inst = generate_with_heldout(spec, a.heldout, a.force);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  save_entries(dir / "observed.mtx", inst.observed);
  if (a.heldout > 0) save_entries(dir / "heldout.mtx", inst.heldout);
  save_dense(dir / "left_factor.mtx", inst.target.left);
  save_dense(dir / "right_factor.mtx", inst.target.right);

  Json info{{"format_version", kReportFormatVersion},
            {"command", "synth"},
            {"n", spec.n},
            {"m", spec.m},
            {"rank", spec.r},
            {"os", spec.oversampling},
            {"cn", a.cn ? Json(*a.cn) : Json(nullptr)},
            {"generator", a.cn ? "conditioned" : "gaussian"},
            {"seed", spec.seed},
            {"observed", inst.observed.size()},
            {"heldout", inst.heldout.size()},
            {"os_realized", os_ratio(inst.observed.size(), spec.n, spec.m, spec.r)}};
  if (a.cn) {
    const Vector s = conditioned_spectrum(spec.r, *a.cn);
    info["spectrum"] = std::vector<double>(s.data(), s.data() + s.size());
  }
  save_json(dir / "spec.json", info);
  out << "wrote " << inst.observed.size() << " observed entries to " << (dir / "observed.mtx").string() << '\n';
  return kConverged;
}

// ---------------------------------------------------------------- complete

struct CompleteArgs {
  std::string input;
  std::optional<std::string> validation;
  std::optional<std::string> test;
  Index rank = 0;
  bool rank_updates = false;
  Index max_rank = 0;
  bool rank_update_line_search = false;
  Index warm_start_cols = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool save_factors = false;
  SolverOptions solver;
};

inline Json complete_echo(const CompleteArgs& a) {
  Json j{{"input", a.input},
         {"validation", a.validation ? Json(*a.validation) : Json(nullptr)},
         {"test", a.test ? Json(*a.test) : Json(nullptr)},
         {"rank", a.rank},
         {"rank_updates", a.rank_updates},
         {"max_rank", a.max_rank},
         {"rank_update_line_search", a.rank_update_line_search},
         {"warm_start_cols", a.warm_start_cols},
         {"seed", a.seed},
         {"out", a.out},
         {"save_factors", a.save_factors}};
  j["solver"] = a.solver.echo();
  if (a.rank_updates) {
    const RankSchedule defaults;
    j["validation_window"] = defaults.validation_window;
    j["plateau_tolerance"] = defaults.plateau_tolerance;
    j["plateau_window"] = defaults.plateau_window;
  }
  return j;
}

inline std::shared_ptr<const ObservedEntries> load_matching(const std::optional<std::string>& path,
                                                            const ObservedEntries& train, const char* what) {
  if (!path) return nullptr;
  auto data = std::make_shared<const ObservedEntries>(load_entries(*path));
  if (data->rows() != train.rows() || data->cols() != train.cols()) {
    std::ostringstream msg;
    msg << "dimension mismatch: " << what << " file is " << data->rows() << " x " << data->cols()
        << " but the input is " << train.rows() << " x " << train.cols();
    throw DimensionError(msg.str());
  }
  return data;
}

/// Runs the solve described by `a` and fills the report; returns the exit code.
inline int solve_into(const CompleteArgs& a, RunReport& report, std::optional<FixedRankPoint>& solution) {
  using Clock = std::chrono::steady_clock;
  const SolverConfig config = a.solver.config();
  auto train = std::make_shared<const ObservedEntries>(load_entries(a.input));
  auto validation = load_matching(a.validation, *train, "validation");
  auto test = load_matching(a.test, *train, "test");
  if (a.warm_start_cols > 0 && a.rank_updates) throw ConfigError("--warm-start-cols and --rank-updates are exclusive");

  report.command = "complete";
  report.config = complete_echo(a);
  const auto start = Clock::now();
  int code = kConverged;

  if (a.rank_updates) {
    RankSchedule schedule;
    schedule.start_rank = a.rank;
    schedule.max_rank = a.max_rank == 0 ? a.rank : a.max_rank;
    schedule.validation = validation;
    schedule.rank_update_line_search = a.rank_update_line_search;
    schedule.seed = a.seed;
    const CompletionProblem problem(train, schedule.start_rank);
    RankSolveResult res = rank_incremental_solve(problem, schedule, config);
    int offset = 0;
    for (const RankStage& st : res.stages) {
      auto rows = rows_of(st.trace, st.rank, offset);
      offset += static_cast<int>(st.trace.iterations.size());
      report.trace.insert(report.trace.end(), rows.begin(), rows.end());
      report.stages.push_back(StageSummary{st.rank, static_cast<int>(st.trace.iterations.size()) - 1,
                                           std::string(to_string(st.trace.reason)), st.train_cost,
                                           std::isnan(st.validation_mse) ? std::nullopt
                                                                         : std::optional<double>(st.validation_mse),
                                           st.accepted});
    }
    report.warnings = res.warnings;
    report.final_metrics.termination = "rank-homotopy-complete";
    solution.emplace(std::move(res.point));
  } else {
    const CompletionProblem problem(train, a.rank);
    FixedRankPoint x0 = random_point(problem.rows(), problem.cols(), problem.rank(), a.seed);
    if (a.warm_start_cols > 0) {
      WarmStart ws = truncated_warm_start(problem, a.warm_start_cols, config, a.seed);
      report.warm_start = Json{{"columns", a.warm_start_cols},
                               {"truncated_iterations", static_cast<int>(ws.truncated_trace.iterations.size()) - 1},
                               {"truncated_termination", std::string(to_string(ws.truncated_trace.reason))},
                               {"truncated_final_cost", ws.truncated_trace.iterations.back().cost}};
      report.warnings.insert(report.warnings.end(), ws.warnings.begin(), ws.warnings.end());
      x0 = std::move(ws.point);
    }
    std::optional<StallMonitor> monitor;
    if (validation) monitor.emplace(validation, RankSchedule{}.validation_window, 0.0, 0);
    SolveResult res = monitor ? cg_solve(problem, std::move(x0), config, std::ref(*monitor))
                              : cg_solve(problem, std::move(x0), config);
    report.trace = rows_of(res.trace, problem.rank());
    report.final_metrics.termination = std::string(to_string(res.trace.reason));
    code = exit_code_for(res.trace.reason);
    FixedRankPoint x = std::move(res.point);
    if (monitor) x = monitor->select(std::move(x)).first;
    solution.emplace(std::move(x));
  }

  const FixedRankPoint& x = *solution;
  FinalMetrics& f = report.final_metrics;
  f.train_cost = cost(CompletionProblem(train, x.rank()), x);
  if (validation) f.validation_mse = mean_square_error(*validation, x);
  if (test) f.test_mse = mean_square_error(*test, x);
  f.rank = x.rank();
  f.iterations = static_cast<int>(report.trace.size()) - 1 - static_cast<int>(report.stages.empty() ? 0 : report.stages.size() - 1);
  f.wall_time_s = config.record_time ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
  return code;
}

inline int run_complete(const CompleteArgs& a, std::ostream& out, std::ostream& err) {
  RunReport report;
  std::optional<FixedRankPoint> x;
  const int code = solve_into(a, report, x);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  write_atomically(dir / "trace.csv", [&](std::ostream& o) { write_trace_csv(o, report.trace); });
  save_json(dir / "report.json", Json(report));
  if (a.save_factors) {
    save_dense(dir / "U.mtx", x->U());
    save_dense(dir / "R.mtx", x->R());
    save_dense(dir / "V.mtx", x->V());
  }
  for (const std::string& w : report.warnings) err << "warning: " << w << '\n';
  out << "rank " << report.final_metrics.rank << "  cost " << format_g17(report.final_metrics.train_cost) << "  ("
      << report.final_metrics.termination << ", " << report.final_metrics.iterations << " iterations)\n";
  if (report.final_metrics.test_mse) out << "test mse " << format_g17(*report.final_metrics.test_mse) << '\n';
  return code;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  Index n = 100;
  Index m = 0;
  std::vector<Index> ranks{5};
  std::vector<double> os;
  std::vector<double> cn;
  std::vector<std::uint64_t> seeds;
  std::uint64_t heldout = 1000;
  std::optional<std::string> movielens;
  std::optional<std::uint64_t> seed;
  int splits = 1;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  int jobs = 1;
  std::string out;
  SolverOptions solver;
};

struct BenchRun {
  Index n = 0;
  Index m = 0;
  Index rank = 0;
  double os = 0.0;
  std::optional<double> cn;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double train_cost = std::numeric_limits<double>::quiet_NaN();
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double time_s = 0.0;
  int iterations = 0;
  std::string termination;
};

struct BenchAggregate {
  Index n = 0;
  Index m = 0;
  Index rank = 0;
  double os = 0.0;
  std::optional<double> cn;
  int runs = 0;
  int failures = 0;
  double cost_mean = 0.0;
  double cost_std = 0.0;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  double time_mean = 0.0;
  double time_std = 0.0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

/// Groups runs that differ only in seed; mean and sample standard deviation over successful runs.
inline std::vector<BenchAggregate> aggregate(const std::vector<BenchRun>& runs) {
  using Key = std::tuple<Index, Index, Index, double, double>;
  std::map<Key, std::vector<const BenchRun*>> groups;
  std::vector<Key> order;
  for (const BenchRun& r : runs) {
    const Key k{r.n, r.m, r.rank, r.os, r.cn.value_or(-1.0)};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::vector<BenchAggregate> out;
  for (const Key& k : order) {
    const auto& g = groups[k];
    BenchAggregate a{g.front()->n, g.front()->m, g.front()->rank, g.front()->os, g.front()->cn};
    std::vector<double> costs;
    std::vector<double> mses;
    std::vector<double> times;
    for (const BenchRun* r : g) {
      ++a.runs;
      if (!r->ok) {
        ++a.failures;
        continue;
      }
      costs.push_back(r->train_cost);
      mses.push_back(r->test_mse);
      times.push_back(r->time_s);
    }
    std::tie(a.cost_mean, a.cost_std) = mean_std(costs);
    std::tie(a.mse_mean, a.mse_std) = mean_std(mses);
    std::tie(a.time_mean, a.time_std) = mean_std(times);
    out.push_back(a);
  }
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + '"';
}

inline std::string optional_g17(const std::optional<double>& v) { return v ? format_g17(*v) : std::string(); }

inline void write_runs_csv(std::ostream& o, const std::vector<BenchRun>& runs) {
  o << "n,m,rank,os,cn,seed,status,train_cost,test_mse,time_s,iterations,termination,error\n";
  for (const BenchRun& r : runs) {
    o << r.n << ',' << r.m << ',' << r.rank << ',' << format_g17(r.os) << ',' << optional_g17(r.cn) << ',' << r.seed
      << ',' << (r.ok ? "ok" : "error") << ',' << format_g17(r.train_cost) << ',' << format_g17(r.test_mse) << ','
      << format_g17(r.time_s) << ',' << r.iterations << ',' << r.termination << ',' << csv_field(r.error) << '\n';
  }
}

inline void write_aggregate_csv(std::ostream& o, const std::vector<BenchAggregate>& rows) {
  o << "n,m,rank,os,cn,runs,failures,cost_mean,cost_std,test_mse_mean,test_mse_std,time_mean,time_std\n";
  for (const BenchAggregate& a : rows) {
    o << a.n << ',' << a.m << ',' << a.rank << ',' << format_g17(a.os) << ',' << optional_g17(a.cn) << ',' << a.runs
      << ',' << a.failures << ',' << format_g17(a.cost_mean) << ',' << format_g17(a.cost_std) << ','
      << format_g17(a.mse_mean) << ',' << format_g17(a.mse_std) << ',' << format_g17(a.time_mean) << ','
      << format_g17(a.time_std) << '\n';
  }
}

/// One fixed-rank solve from a seeded random start, early-stopped on `validation` when given.
inline void solve_run(BenchRun& run, const std::shared_ptr<const ObservedEntries>& train,
                      const std::shared_ptr<const ObservedEntries>& validation, const ObservedEntries& test,
                      const SolverConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const CompletionProblem problem(train, run.rank);
  std::optional<StallMonitor> monitor;
  if (validation) monitor.emplace(validation, RankSchedule{}.validation_window, 0.0, 0);
  FixedRankPoint x0 = random_point(problem.rows(), problem.cols(), run.rank, run.seed);
  SolveResult res = monitor ? cg_solve(problem, std::move(x0), config, std::ref(*monitor))
                            : cg_solve(problem, std::move(x0), config);
  FixedRankPoint x = monitor ? monitor->select(std::move(res.point)).first : std::move(res.point);
  run.train_cost = cost(problem, x);
  run.test_mse = test.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_square_error(test, x);
  run.iterations = static_cast<int>(res.trace.iterations.size()) - 1;
  run.termination = std::string(to_string(res.trace.reason));
  run.time_s = config.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
  run.ok = true;
}

inline void run_pool(std::vector<BenchRun>& runs, int jobs, const std::function<void(BenchRun&)>& work) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      try {
        work(runs[i]);
      } catch (const std::exception& e) {
        runs[i].ok = false;
        runs[i].error = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline int run_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const SolverConfig config = a.solver.config();
  std::vector<BenchRun> runs;

  if (a.movielens) {
    if (!a.seed) throw ConfigError("--seed is required with --movielens");
    if (a.splits < 1) throw ConfigError("--splits must be >= 1");
    std::ifstream in(*a.movielens);
    if (!in) throw Error("cannot open " + *a.movielens);
    const ObservedEntries all = parse_movielens(in).to_observed();
    const auto fractions = parse_fractions(a.fractions);
    std::vector<DataSplit> splits;
    for (int s = 0; s < a.splits; ++s) splits.push_back(split_train_val_test(all, fractions, *a.seed + s));
    for (Index r : a.ranks) {
      for (int s = 0; s < a.splits; ++s) {
        BenchRun run;
        run.n = all.rows();
        run.m = all.cols();
        run.rank = r;
        run.seed = *a.seed + static_cast<std::uint64_t>(s);
        runs.push_back(run);
      }
    }
    run_pool(runs, a.jobs, [&](BenchRun& run) {
      const DataSplit& sp = splits[run.seed - *a.seed];
      auto train = std::make_shared<const ObservedEntries>(sp.train);
      auto val = sp.validation.empty() ? nullptr : std::make_shared<const ObservedEntries>(sp.validation);
      solve_run(run, train, val, sp.test, config);
    });
  } else {
    if (a.seeds.empty()) throw ConfigError("--seeds is required (no implicit entropy)");
    if (a.os.empty()) throw ConfigError("--os needs at least one value");
    std::vector<std::optional<double>> cns;
    for (double c : a.cn) cns.emplace_back(c);
    if (cns.empty()) cns.emplace_back(std::nullopt);
    for (Index r : a.ranks) {
      for (double os : a.os) {
        for (const auto& cn : cns) {
          for (std::uint64_t seed : a.seeds) {
            BenchRun run;
            run.n = a.n;
            run.m = a.m == 0 ? a.n : a.m;
            run.rank = r;
            run.os = os;
            run.cn = cn;
            run.seed = seed;
            runs.push_back(run);
          }
        }
      }
    }
    run_pool(runs, a.jobs, [&](BenchRun& run) {
      const HeldOutInstance inst = generate_with_heldout(SyntheticSpec{run.n, run.m, run.rank, run.cn, run.os, run.seed},
                                                         a.heldout);
      solve_run(run, std::make_shared<const ObservedEntries>(inst.observed), nullptr, inst.heldout, config);
    });
  }

  const std::vector<BenchAggregate> agg = aggregate(runs);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  write_atomically(dir / "runs.csv", [&](std::ostream& o) { write_runs_csv(o, runs); });
  write_atomically(dir / "aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(o, agg); });
  int failures = 0;
  for (const BenchRun& r : runs) {
    if (!r.ok) {
      ++failures;
      err << "run failed (rank " << r.rank << ", seed " << r.seed << "): " << r.error << '\n';
    }
  }
  out << runs.size() << " runs, " << agg.size() << " configurations, " << failures << " failed\n";
  return kConverged;
}

// ---------------------------------------------------------------- movielens-prep

struct PrepArgs {
  std::string input;
  std::string out;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

inline int run_movielens_prep(const PrepArgs& a, std::ostream& out, std::ostream&) {
  std::ifstream in(a.input);
  if (!in) throw Error("cannot open " + a.input);
  RatingsDataset data;
  try {
    data = parse_movielens(in);
  } catch (const ParseError& e) {
    throw ParseError(a.input + ": " + e.what(), e.line());
  }
  const DataSplit sp = split_train_val_test(data.to_observed(), parse_fractions(a.fractions), a.seed);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  save_entries(dir / "train.mtx", sp.train);
  save_entries(dir / "validation.mtx", sp.validation);
  save_entries(dir / "test.mtx", sp.test);
  auto write_ids = [&](const char* name, const std::vector<std::int64_t>& ids) {
    write_atomically(dir / name, [&](std::ostream& o) {
      for (std::int64_t id : ids) o << id << '\n';
    });
  };
  write_ids("users.txt", data.user_ids);
  write_ids("items.txt", data.item_ids);
  save_json(dir / "summary.json", Json{{"format_version", kReportFormatVersion},
                                       {"command", "movielens-prep"},
                                       {"input", a.input},
                                       {"seed", a.seed},
                                       {"fractions", a.fractions},
                                       {"ratings", data.ratings.size()},
                                       {"users", data.users()},
                                       {"items", data.items()},
                                       {"max_user_id", data.user_ids.back()},
                                       {"max_item_id", data.item_ids.back()},
                                       {"train", sp.train.size()},
                                       {"validation", sp.validation.size()},
                                       {"test", sp.test.size()}});
  out << data.ratings.size() << " ratings, " << data.users() << " users, " << data.items() << " items\n";
  return kConverged;
}

// ---------------------------------------------------------------- entry point

inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Low-rank matrix completion by Riemannian conjugate gradient"};
  app.name("r3mc");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "Generate a synthetic low-rank completion instance");
  option(s, "--n", synth.n, "Rows")->required()->check(CLI::PositiveNumber);
  option(s, "--m", synth.m, "Columns (default: n)")->check(CLI::PositiveNumber);
  option(s, "--rank", synth.rank, "Target rank")->required()->check(CLI::PositiveNumber);
  option(s, "--os", synth.os, "Over-sampling ratio |Omega| / (nr + mr - r^2)")->required();
  option(s, "--cn", synth.cn, "Condition number; selects the log-uniform spectrum generator");
  option(s, "--seed", synth.seed, "Random seed")->required();
  option(s, "--heldout", synth.heldout, "Extra disjoint entries written to heldout.mtx")->capture_default_str();
  option(s, "--out", synth.out, "Output directory")->required();
  flag(s, "--force", synth.force, "Proceed with OS <= 1");

  CompleteArgs complete;
  CLI::App* c = app.add_subcommand("complete", "Complete a matrix from observed entries");
  option(c, "--input", complete.input, "Observed entries (Matrix Market coordinate)")->required();
  option(c, "--validation", complete.validation, "Validation entries for early stopping and rank selection");
  option(c, "--test", complete.test, "Test entries, reported only");
  option(c, "--rank", complete.rank, "Rank (starting rank with --rank-updates)")->required()->check(CLI::PositiveNumber);
  flag(c, "--rank-updates", complete.rank_updates, "Grow the rank by rank-one updates");
  option(c, "--max-rank", complete.max_rank, "Largest rank for --rank-updates (default: --rank)");
  flag(c, "--rank-update-line-search", complete.rank_update_line_search,
       "Scale each rank-one update by an exact line search");
  option(c, "--warm-start-cols", complete.warm_start_cols, "Initialize from a solve on this many random columns");
  option(c, "--seed", complete.seed, "Seed for the random initial point")->required();
  option(c, "--out", complete.out, "Output directory for report.json and trace.csv")->required();
  flag(c, "--save-factors", complete.save_factors, "Also write U.mtx, R.mtx, V.mtx");
  complete.solver.add_to(c);

  BenchArgs bench;
  CLI::App* b = app.add_subcommand("bench", "Sweep configurations and aggregate results");
  option(b, "--n", bench.n, "Rows")->capture_default_str()->check(CLI::PositiveNumber);
  option(b, "--m", bench.m, "Columns (default: n)");
  option(b, "--ranks", bench.ranks, "Ranks")->delimiter(',')->capture_default_str();
  option(b, "--os", bench.os, "Over-sampling ratios")->delimiter(',');
  option(b, "--cn", bench.cn, "Condition numbers (omit for Gaussian factors)")->delimiter(',');
  option(b, "--seeds", bench.seeds, "Seeds, one run each")->delimiter(',');
  option(b, "--heldout", bench.heldout, "Held-out entries per synthetic run for test MSE")->capture_default_str();
  option(b, "--movielens", bench.movielens, "Ratings file (UserID::MovieID::Rating::Timestamp) instead of synthetic data");
  option(b, "--seed", bench.seed, "Base split seed with --movielens");
  option(b, "--splits", bench.splits, "Random splits with --movielens")->capture_default_str();
  option(b, "--fractions", bench.fractions, "Train/validation/test fractions")->delimiter(',')->capture_default_str();
  option(b, "--jobs", bench.jobs, "Concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();
  option(b, "--out", bench.out, "Output directory for runs.csv and aggregate.csv")->required();
  bench.solver.add_to(b);

  PrepArgs prep;
  CLI::App* p = app.add_subcommand("movielens-prep", "Split a MovieLens ratings file into Matrix Market files");
  option(p, "--input", prep.input, "ratings.dat")->required();
  option(p, "--out", prep.out, "Output directory")->required();
  option(p, "--fractions", prep.fractions, "Train/validation/test fractions")->delimiter(',')->capture_default_str();
  option(p, "--seed", prep.seed, "Split seed")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kConverged : kFailure;
  }

  try {
    if (*s) return run_synth(synth, out, err);
    if (*c) return run_complete(complete, out, err);
    if (*b) return run_bench(bench, out, err);
    if (*p) return run_movielens_prep(prep, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace r3mc::cli
