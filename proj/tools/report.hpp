#pragma once

// Run reports (JSON) and per-iteration traces (CSV).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "r3mc/errors.hpp"
#include "r3mc/solver.hpp"

namespace r3mc::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kReportFormatVersion = 1;
inline constexpr const char* kTraceHeader = "iter,cost,grad_norm,step,backtracks,reset,time_s";

struct TraceRow {
  Index rank = 0;
  IterationRecord record;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct StageSummary {
  Index rank = 0;
  int iterations = 0;
  std::string termination;
  double train_cost = 0.0;
  std::optional<double> validation_mse;
  bool accepted = false;

  friend bool operator==(const StageSummary&, const StageSummary&) = default;
};

struct FinalMetrics {
  double train_cost = 0.0;
  std::optional<double> validation_mse;
  std::optional<double> test_mse;
  double wall_time_s = 0.0;
  int iterations = 0;
  std::string termination;
  Index rank = 0;

  friend bool operator==(const FinalMetrics&, const FinalMetrics&) = default;
};

struct RunReport {
  int format_version = kReportFormatVersion;
  std::string command;
  Json config = Json::object();
  std::vector<TraceRow> trace;
  std::vector<StageSummary> stages;
  std::optional<Json> warm_start;
  FinalMetrics final_metrics;
  std::vector<std::string> warnings;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

namespace detail {

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::optional<double> read_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline void to_json(Json& j, const TraceRow& t) {
  j = Json{{"rank", t.rank},
           {"iter", t.record.iteration},
           {"cost", t.record.cost},
           {"grad_norm", t.record.gradient_norm},
           {"step", t.record.step},
           {"backtracks", t.record.backtracks},
           {"reset", t.record.reset},
           {"time_s", t.record.time_s}};
}

inline void from_json(const Json& j, TraceRow& t) {
  t.rank = j.at("rank").get<Index>();
  t.record.iteration = j.at("iter").get<int>();
  t.record.cost = j.at("cost").get<double>();
  t.record.gradient_norm = j.at("grad_norm").get<double>();
  t.record.step = j.at("step").get<double>();
  t.record.backtracks = j.at("backtracks").get<int>();
  t.record.reset = j.at("reset").get<bool>();
  t.record.time_s = j.at("time_s").get<double>();
}

inline void to_json(Json& j, const StageSummary& s) {
  j = Json{{"rank", s.rank},
           {"iterations", s.iterations},
           {"termination", s.termination},
           {"train_cost", s.train_cost},
           {"validation_mse", detail::optional_number(s.validation_mse)},
           {"accepted", s.accepted}};
}

inline void from_json(const Json& j, StageSummary& s) {
  s.rank = j.at("rank").get<Index>();
  s.iterations = j.at("iterations").get<int>();
  s.termination = j.at("termination").get<std::string>();
  s.train_cost = j.at("train_cost").get<double>();
  s.validation_mse = detail::read_optional(j, "validation_mse");
  s.accepted = j.at("accepted").get<bool>();
}

inline void to_json(Json& j, const FinalMetrics& f) {
  j = Json{{"train_cost", f.train_cost},
           {"validation_mse", detail::optional_number(f.validation_mse)},
           {"test_mse", detail::optional_number(f.test_mse)},
           {"wall_time_s", f.wall_time_s},
           {"iterations", f.iterations},
           {"termination", f.termination},
           {"rank", f.rank}};
}

inline void from_json(const Json& j, FinalMetrics& f) {
  f.train_cost = j.at("train_cost").get<double>();
  f.validation_mse = detail::read_optional(j, "validation_mse");
  f.test_mse = detail::read_optional(j, "test_mse");
  f.wall_time_s = j.at("wall_time_s").get<double>();
  f.iterations = j.at("iterations").get<int>();
  f.termination = j.at("termination").get<std::string>();
  f.rank = j.at("rank").get<Index>();
}

inline void to_json(Json& j, const RunReport& r) {
  j = Json{{"format_version", r.format_version},
           {"command", r.command},
           {"config", r.config},
           {"final", r.final_metrics},
           {"stages", r.stages},
           {"warm_start", r.warm_start ? *r.warm_start : Json(nullptr)},
           {"warnings", r.warnings},
           {"trace", r.trace}};
}

inline void from_json(const Json& j, RunReport& r) {
  r.format_version = j.at("format_version").get<int>();
  if (r.format_version != kReportFormatVersion) {
    throw ParseError("unsupported report format_version " + std::to_string(r.format_version), 1);
  }
  r.command = j.at("command").get<std::string>();
  r.config = j.at("config");
  r.final_metrics = j.at("final").get<FinalMetrics>();
  r.stages = j.at("stages").get<std::vector<StageSummary>>();
  r.warm_start = j.at("warm_start").is_null() ? std::nullopt : std::optional<Json>(j.at("warm_start"));
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.trace = j.at("trace").get<std::vector<TraceRow>>();
}

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << kTraceHeader << '\n';
  for (const TraceRow& t : rows) {
    const IterationRecord& r = t.record;
    out << r.iteration << ',' << format_g17(r.cost) << ',' << format_g17(r.gradient_norm) << ',' << format_g17(r.step)
        << ',' << r.backtracks << ',' << (r.reset ? 1 : 0) << ',' << format_g17(r.time_s) << '\n';
  }
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move " + tmp.string() + " to " + path.string());
  }
}

}  // namespace r3mc::cli
