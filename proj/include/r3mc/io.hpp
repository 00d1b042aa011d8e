#pragma once

// MovieLens ".dat" ratings and Matrix Market files.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "r3mc/errors.hpp"
#include "r3mc/problem.hpp"
#include "r3mc/smallmat.hpp"

namespace r3mc {

struct Rating {
  Index user = 0;
  Index item = 0;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;

  friend bool operator==(const Rating&, const Rating&) = default;
};

/// Ratings with users and items re-indexed densely from 0 in increasing order
/// of their original ids; `user_ids[u]` / `item_ids[i]` give the originals.
struct RatingsDataset {
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
  std::vector<Rating> ratings;

  Index users() const { return static_cast<Index>(user_ids.size()); }
  Index items() const { return static_cast<Index>(item_ids.size()); }

  /// Users x items pattern with the ratings as values.
  ObservedEntries to_observed() const {
    std::vector<Entry> entries;
    entries.reserve(ratings.size());
    for (const Rating& r : ratings) entries.push_back(Entry{r.user, r.item, r.rating});
    return ObservedEntries(users(), items(), std::move(entries));
  }
};

namespace detail {

template <class T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace detail

/// Parses `UserID::MovieID::Rating[::Timestamp]` lines. Blank lines are skipped.
inline RatingsDataset parse_movielens(std::istream& in) {
  struct Raw {
    std::int64_t user;
    std::int64_t item;
    double rating;
    std::optional<std::int64_t> timestamp;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::blank(line)) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find("::");
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 2);
    }
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError("expected UserID::MovieID::Rating::Timestamp, got " + std::to_string(fields.size()) + " field(s)",
                       lineno);
    }
    Raw r{};
    if (!detail::parse_number(fields[0], r.user)) throw ParseError("bad user id '" + std::string(fields[0]) + "'", lineno);
    if (!detail::parse_number(fields[1], r.item)) throw ParseError("bad movie id '" + std::string(fields[1]) + "'", lineno);
    if (!detail::parse_number(fields[2], r.rating) || !std::isfinite(r.rating)) {
      throw ParseError("bad rating '" + std::string(fields[2]) + "'", lineno);
    }
    if (fields.size() == 4) {
      std::int64_t t = 0;
      if (!detail::parse_number(fields[3], t)) throw ParseError("bad timestamp '" + std::string(fields[3]) + "'", lineno);
      r.timestamp = t;
    }
    raw.push_back(r);
  }
  if (raw.empty()) throw ParseError("no ratings found", lineno == 0 ? 1 : lineno);

  RatingsDataset out;
  for (const Raw& r : raw) {
    out.user_ids.push_back(r.user);
    out.item_ids.push_back(r.item);
  }
  for (auto* ids : {&out.user_ids, &out.item_ids}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }
  auto dense = [](const std::vector<std::int64_t>& ids, std::int64_t id) {
    return static_cast<Index>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  out.ratings.reserve(raw.size());
  for (const Raw& r : raw) {
    out.ratings.push_back(Rating{dense(out.user_ids, r.user), dense(out.item_ids, r.item), r.rating, r.timestamp});
  }
  return out;
}

inline void write_movielens(std::ostream& out, const RatingsDataset& data) {
  for (const Rating& r : data.ratings) {
    out << data.user_ids.at(static_cast<std::size_t>(r.user)) << "::" << data.item_ids.at(static_cast<std::size_t>(r.item))
        << "::" << detail::format_double(r.rating);
    if (r.timestamp) out << "::" << *r.timestamp;
    out << '\n';
  }
}

inline constexpr std::string_view kMatrixMarketCoordinateBanner = "%%MatrixMarket matrix coordinate real general";
inline constexpr std::string_view kMatrixMarketArrayBanner = "%%MatrixMarket matrix array real general";

namespace detail {

/// Reads the banner and returns its lower-cased tokens; `lineno` is advanced.
inline std::vector<std::string> read_banner(std::istream& in, std::size_t& lineno) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file, expected a %%MatrixMarket banner", 1);
  ++lineno;
  std::istringstream ss(line);
  std::vector<std::string> tokens;
  for (std::string t; ss >> t;) tokens.push_back(lower(t));
  if (tokens.size() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix") {
    throw ParseError("malformed %%MatrixMarket banner", lineno);
  }
  return tokens;
}

/// Next non-comment, non-blank line.
inline bool next_data_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '%' || blank(line)) continue;
    return true;
  }
  return false;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

/// Coordinate real/integer general matrix; indices are 1-based on the wire.
inline ObservedEntries read_matrix_market(std::istream& in) {
  std::size_t lineno = 0;
  const auto banner = detail::read_banner(in, lineno);
  if (banner[2] != "coordinate") throw ParseError("expected a coordinate matrix, got '" + banner[2] + "'", lineno);
  if (banner[3] != "real" && banner[3] != "integer" && banner[3] != "double") {
    throw ParseError("unsupported field '" + banner[3] + "', expected real", lineno);
  }
  if (banner[4] != "general") throw ParseError("unsupported symmetry '" + banner[4] + "', expected general", lineno);

  std::string line;
  if (!detail::next_data_line(in, line, lineno)) throw ParseError("missing size line", lineno + 1);
  const auto size = detail::split_ws(line);
  std::int64_t n = 0;
  std::int64_t m = 0;
  std::int64_t nnz = 0;
  if (size.size() != 3 || !detail::parse_number(size[0], n) || !detail::parse_number(size[1], m) ||
      !detail::parse_number(size[2], nnz) || n < 1 || m < 1 || nnz < 1) {
    throw ParseError("size line must be 'rows cols entries' with positive values", lineno);
  }
  if (static_cast<double>(nnz) > static_cast<double>(n) * static_cast<double>(m)) {
    throw ParseError("entry count exceeds rows * cols", lineno);
  }

  struct Located {
    Entry e;
    std::size_t line;
  };
  std::vector<Located> items;
  items.reserve(static_cast<std::size_t>(nnz));
  while (detail::next_data_line(in, line, lineno)) {
    const auto f = detail::split_ws(line);
    std::int64_t i = 0;
    std::int64_t j = 0;
    double v = 0.0;
    if (f.size() != 3 || !detail::parse_number(f[0], i) || !detail::parse_number(f[1], j) ||
        !detail::parse_number(f[2], v)) {
      throw ParseError("expected 'row col value'", lineno);
    }
    if (i < 1 || i > n || j < 1 || j > m) throw ParseError("coordinate out of range", lineno);
    if (!std::isfinite(v)) throw ParseError("non-finite value", lineno);
    if (static_cast<std::int64_t>(items.size()) == nnz) {
      throw ParseError("more entries than the " + std::to_string(nnz) + " declared", lineno);
    }
    items.push_back(Located{Entry{static_cast<Index>(i - 1), static_cast<Index>(j - 1), v}, lineno});
  }
  if (static_cast<std::int64_t>(items.size()) != nnz) {
    throw ParseError("declared " + std::to_string(nnz) + " entries, found " + std::to_string(items.size()), lineno);
  }
  std::stable_sort(items.begin(), items.end(), [](const Located& a, const Located& b) {
    return a.e.row != b.e.row ? a.e.row < b.e.row : a.e.col < b.e.col;
  });
  for (std::size_t k = 1; k < items.size(); ++k) {
    if (items[k].e.row == items[k - 1].e.row && items[k].e.col == items[k - 1].e.col) {
      std::ostringstream msg;
      msg << "duplicate coordinate (" << items[k].e.row + 1 << ", " << items[k].e.col + 1 << ") also on line "
          << items[k - 1].line;
      throw ParseError(msg.str(), items[k].line);
    }
  }
  std::vector<Entry> entries;
  entries.reserve(items.size());
  for (const Located& l : items) entries.push_back(l.e);
  return ObservedEntries(static_cast<Index>(n), static_cast<Index>(m), std::move(entries));
}

inline void write_matrix_market(std::ostream& out, const ObservedEntries& data) {
  out << kMatrixMarketCoordinateBanner << '\n' << data.rows() << ' ' << data.cols() << ' ' << data.size() << '\n';
  for (const Entry& e : data.entries()) out << e.row + 1 << ' ' << e.col + 1 << ' ' << detail::format_double(e.value) << '\n';
}

/// Dense column-major array format, used for factor matrices.
inline void write_matrix_market_dense(std::ostream& out, const Matrix& a) {
  out << kMatrixMarketArrayBanner << '\n' << a.rows() << ' ' << a.cols() << '\n';
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) out << detail::format_double(a(i, j)) << '\n';
  }
}

inline Matrix read_matrix_market_dense(std::istream& in) {
  std::size_t lineno = 0;
  const auto banner = detail::read_banner(in, lineno);
  if (banner[2] != "array" || (banner[3] != "real" && banner[3] != "double") || banner[4] != "general") {
    throw ParseError("expected '" + std::string(kMatrixMarketArrayBanner) + "'", lineno);
  }
  std::string line;
  if (!detail::next_data_line(in, line, lineno)) throw ParseError("missing size line", lineno + 1);
  const auto size = detail::split_ws(line);
  std::int64_t n = 0;
  std::int64_t m = 0;
  if (size.size() != 2 || !detail::parse_number(size[0], n) || !detail::parse_number(size[1], m) || n < 1 || m < 1) {
    throw ParseError("size line must be 'rows cols'", lineno);
  }
  Matrix a(n, m);
  std::int64_t k = 0;
  while (detail::next_data_line(in, line, lineno)) {
    double v = 0.0;
    if (!detail::parse_number(std::string_view(line), v)) throw ParseError("expected one value per line", lineno);
    if (k == n * m) throw ParseError("more values than rows * cols", lineno);
    a(k % n, k / n) = v;
    ++k;
  }
  if (k != n * m) throw ParseError("declared " + std::to_string(n * m) + " values, found " + std::to_string(k), lineno);
  return a;
}

}  // namespace r3mc
