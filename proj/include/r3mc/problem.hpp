#pragma once

// Fixed-rank matrix completion cost f(U, R, V) = ||P_Omega(U R V^T - X*)||_F^2 / |Omega|
// and its first-order machinery. Every sparse kernel streams the observed
// entries in sorted (row, column) order, so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <span>
#include <utility>
#include <vector>

#include "r3mc/errors.hpp"
#include "r3mc/manifold.hpp"
#include "r3mc/smallmat.hpp"

namespace r3mc {

struct Entry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Work done by the sparse kernels on the calling thread. Solver runs are
/// sequential, so a thread-local tally attributes work to one run.
struct KernelCounters {
  std::uint64_t sparse_flops = 0;
  std::uint64_t cost_evaluations = 0;
};

inline KernelCounters& kernel_counters() {
  thread_local KernelCounters counters;
  return counters;
}

/// Observed entries of an n x m matrix, sorted by (row, column), with a CSR
/// row index and a column-major permutation for transposed products.
class ObservedEntries {
 public:
  ObservedEntries() = default;

  ObservedEntries(Index n, Index m, std::vector<Entry> entries) : n_(n), m_(m), entries_(std::move(entries)) {
    if (n < 1 || m < 1) throw DimensionError("ObservedEntries: matrix dimensions must be positive");
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const Entry& e = entries_[k];
      if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= m) {
        std::ostringstream os;
        os << "ObservedEntries: index (" << e.row << ", " << e.col << ") outside " << n << "x" << m;
        throw DimensionError(os.str());
      }
      if (!std::isfinite(e.value)) throw ContractViolation("ObservedEntries: non-finite value");
      if (k > 0 && entries_[k - 1].row == e.row && entries_[k - 1].col == e.col) {
        std::ostringstream os;
        os << "ObservedEntries: duplicate entry (" << e.row << ", " << e.col << ")";
        throw ContractViolation(os.str());
      }
    }
    row_start_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (const Entry& e : entries_) ++row_start_[static_cast<std::size_t>(e.row) + 1];
    std::partial_sum(row_start_.begin(), row_start_.end(), row_start_.begin());
    by_column_.resize(entries_.size());
    std::iota(by_column_.begin(), by_column_.end(), std::size_t{0});
    std::stable_sort(by_column_.begin(), by_column_.end(),
                     [this](std::size_t a, std::size_t b) { return entries_[a].col < entries_[b].col; });
  }

  Index rows() const noexcept { return n_; }
  Index cols() const noexcept { return m_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::span<const Entry> entries() const noexcept { return entries_; }
  const Entry& operator[](std::size_t k) const { return entries_[k]; }

  /// Entries of row i are [row_start()[i], row_start()[i + 1]).
  std::span<const std::size_t> row_start() const noexcept { return row_start_; }
  /// Entry indices ordered by (column, row).
  std::span<const std::size_t> column_order() const noexcept { return by_column_; }

  /// Same pattern with new values (length must match).
  ObservedEntries with_values(std::span<const double> values) const {
    if (values.size() != entries_.size()) throw DimensionError("ObservedEntries::with_values: length mismatch");
    ObservedEntries out = *this;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!std::isfinite(values[k])) throw ContractViolation("ObservedEntries: non-finite value");
      out.entries_[k].value = values[k];
    }
    return out;
  }

  ObservedEntries transposed() const {
    std::vector<Entry> t;
    t.reserve(entries_.size());
    for (const Entry& e : entries_) t.push_back(Entry{e.col, e.row, e.value});
    return ObservedEntries(m_, n_, std::move(t));
  }

  friend bool operator==(const ObservedEntries& a, const ObservedEntries& b) {
    return a.n_ == b.n_ && a.m_ == b.m_ && a.entries_ == b.entries_;
  }

 private:
  Index n_ = 0;
  Index m_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> by_column_;
};

/// True when no (row, column) pair occurs in both sets (sorted merge).
inline bool disjoint_patterns(const ObservedEntries& a, const ObservedEntries& b) {
  auto ia = a.entries().begin();
  auto ib = b.entries().begin();
  while (ia != a.entries().end() && ib != b.entries().end()) {
    if (ia->row == ib->row && ia->col == ib->col) return false;
    if (ia->row < ib->row || (ia->row == ib->row && ia->col < ib->col)) {
      ++ia;
    } else {
      ++ib;
    }
  }
  return true;
}

class CompletionProblem {
 public:
  CompletionProblem(ObservedEntries observed, Index rank)
      : CompletionProblem(std::make_shared<const ObservedEntries>(std::move(observed)), rank) {}

  CompletionProblem(std::shared_ptr<const ObservedEntries> observed, Index rank)
      : observed_(std::move(observed)), rank_(rank) {
    if (!observed_ || observed_->empty()) throw ConfigError("CompletionProblem: need at least one observed entry");
    if (rank_ < 1 || rank_ > std::min(observed_->rows(), observed_->cols())) {
      throw DimensionError("CompletionProblem: rank must satisfy 1 <= r <= min(n, m)");
    }
  }

  const ObservedEntries& observed() const noexcept { return *observed_; }
  const std::shared_ptr<const ObservedEntries>& observed_ptr() const noexcept { return observed_; }
  Index rows() const noexcept { return observed_->rows(); }
  Index cols() const noexcept { return observed_->cols(); }
  Index rank() const noexcept { return rank_; }

  CompletionProblem with_rank(Index r) const { return CompletionProblem(observed_, r); }

 private:
  std::shared_ptr<const ObservedEntries> observed_;
  Index rank_;
};

/// S = 2 (P_Omega(U R V^T) - P_Omega(X*)) / |Omega| on the problem's pattern.
struct SparseResidual {
  std::shared_ptr<const ObservedEntries> pattern;
  std::vector<double> values;

  Index rows() const { return pattern->rows(); }
  Index cols() const { return pattern->cols(); }
};

namespace detail {

inline void require_point_matches(const ObservedEntries& pattern, const FixedRankPoint& x, const char* what) {
  if (pattern.rows() != x.rows() || pattern.cols() != x.cols()) {
    std::ostringstream os;
    os << what << ": point is " << x.rows() << "x" << x.cols() << " but the pattern is " << pattern.rows() << "x"
       << pattern.cols();
    throw DimensionError(os.str());
  }
}

/// (U R)^T and V^T, so that every entry is a dot product of two contiguous columns.
struct FactorColumns {
  Matrix left;   // r x n
  Matrix right;  // r x m
};

inline FactorColumns factor_columns(const FixedRankPoint& x) {
  return FactorColumns{(x.U() * x.R()).transpose(), x.V().transpose()};
}

}  // namespace detail

/// (U R V^T)_ij for every (i, j) in the pattern.
inline std::vector<double> masked_values(const FixedRankPoint& x, const ObservedEntries& pattern) {
  detail::require_point_matches(pattern, x, "masked_values");
  const detail::FactorColumns f = detail::factor_columns(x);
  std::vector<double> out(pattern.size());
  std::size_t k = 0;
  for (const Entry& e : pattern.entries()) out[k++] = f.left.col(e.row).dot(f.right.col(e.col));
  kernel_counters().sparse_flops += 2 * static_cast<std::uint64_t>(x.rank()) * pattern.size();
  return out;
}

/// Model values, residual e = P_Omega(URV^T - X*) and cost ||e||^2 / |Omega|.
struct Evaluation {
  std::vector<double> residual;
  double cost = 0.0;
};

inline Evaluation evaluate(const CompletionProblem& problem, const FixedRankPoint& x) {
  const ObservedEntries& obs = problem.observed();
  Evaluation ev{masked_values(x, obs), 0.0};
  double sum = 0.0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    ev.residual[k] -= obs[k].value;
    sum += ev.residual[k] * ev.residual[k];
  }
  ev.cost = sum / static_cast<double>(obs.size());
  kernel_counters().sparse_flops += 3 * obs.size();
  ++kernel_counters().cost_evaluations;
  return ev;
}

inline double cost(const CompletionProblem& problem, const FixedRankPoint& x) { return evaluate(problem, x).cost; }

/// Mean square error of the model over arbitrary held-out entries.
inline double mean_square_error(const ObservedEntries& heldout, const FixedRankPoint& x) {
  if (heldout.empty()) throw ConfigError("mean_square_error: empty held-out set");
  const std::vector<double> model = masked_values(x, heldout);
  double sum = 0.0;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const double d = model[k] - heldout[k].value;
    sum += d * d;
  }
  return sum / static_cast<double>(model.size());
}

inline SparseResidual residual_from(const CompletionProblem& problem, const Evaluation& ev) {
  const double scale = 2.0 / static_cast<double>(problem.observed().size());
  SparseResidual s{problem.observed_ptr(), std::vector<double>(ev.residual.size())};
  for (std::size_t k = 0; k < ev.residual.size(); ++k) s.values[k] = scale * ev.residual[k];
  return s;
}

inline SparseResidual residual(const CompletionProblem& problem, const FixedRankPoint& x) {
  return residual_from(problem, evaluate(problem, x));
}

enum class Side {
  kLeft,       // S * M, M is m x r, result n x r
  kTranspose,  // S^T * M, M is n x r, result m x r
};

/// S * M or S^T * M by streaming the triplets; O(|Omega| r).
inline Matrix sparse_apply(const SparseResidual& s, const Matrix& m, Side side) {
  const ObservedEntries& p = *s.pattern;
  const Index inner = side == Side::kLeft ? p.cols() : p.rows();
  const Index outer = side == Side::kLeft ? p.rows() : p.cols();
  if (m.rows() != inner) {
    throw DimensionError("sparse_apply: operand has " + std::to_string(m.rows()) + " rows, expected " +
                         std::to_string(inner));
  }
  const Matrix mt = m.transpose();
  Matrix out = Matrix::Zero(m.cols(), outer);
  if (side == Side::kLeft) {
    for (std::size_t k = 0; k < p.size(); ++k) out.col(p[k].row).noalias() += s.values[k] * mt.col(p[k].col);
  } else {
    for (std::size_t k : p.column_order()) out.col(p[k].col).noalias() += s.values[k] * mt.col(p[k].row);
  }
  kernel_counters().sparse_flops += 2 * static_cast<std::uint64_t>(m.cols()) * p.size();
  return out.transpose();
}

/// Riemannian gradient from a precomputed residual:
///   (S V R^T - U B_U) (R R^T)^{-1},  U^T S V,  (S^T U R - V B_V) (R^T R)^{-1}
/// with R R^T B_U + B_U R R^T = 2 sym(R R^T U^T S V R^T) and
///      R^T R B_V + B_V R^T R = 2 sym(R^T R V^T S^T U R).
/// Evaluated in the singular bases of R = A D B^T with G = A^T (U^T S V) B:
///   B_U (R R^T)^{-1} = A K A^T,  K_ij = d_i (d_i G_ij + d_j G_ji) / ((d_i^2 + d_j^2) d_j),
///   S V R^T (R R^T)^{-1} = S V B D^{-1} A^T, and symmetrically for V with G^T.
inline HorizontalVector riemannian_gradient(const FixedRankPoint& x, const SparseResidual& s) {
  detail::require_point_matches(*s.pattern, x, "riemannian_gradient");
  const Svd& core = x.core_svd();
  const Matrix& a = core.left;
  const Matrix& b = core.right;
  const Vector& d = core.singular;
  const Index r = x.rank();
  const Matrix sv = sparse_apply(s, x.V(), Side::kLeft);
  const Matrix stu = sparse_apply(s, x.U(), Side::kTranspose);
  const Matrix g_r = x.U().transpose() * sv;
  const Matrix g = a.transpose() * g_r * b;
  Matrix ku(r, r);
  Matrix kv(r, r);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < r; ++i) {
      const double den = (d(i) * d(i) + d(j) * d(j)) * d(j);
      ku(i, j) = d(i) * (d(i) * g(i, j) + d(j) * g(j, i)) / den;
      kv(i, j) = d(i) * (d(i) * g(j, i) + d(j) * g(i, j)) / den;
    }
  }
  const Vector dinv = d.cwiseInverse();
  Triple out{(sv * b * dinv.asDiagonal() - x.U() * a * ku) * a.transpose(), g_r,
             (stu * a * dinv.asDiagonal() - x.V() * b * kv) * b.transpose()};
  return HorizontalVector::assume_horizontal(x, std::move(out));
}

inline HorizontalVector riemannian_gradient(const CompletionProblem& problem, const FixedRankPoint& x) {
  return riemannian_gradient(x, residual(problem, x));
}

/// Outcome of the linearized step-size computation.
struct LinearizedStep {
  enum class Status {
    kOk,          // step >= 0 minimizes ||e + s D||^2
    kDegenerate,  // D vanishes on Omega
    kNonDescent,  // <e, D> > 0: the minimizer is negative
  };
  double step = 0.0;
  Status status = Status::kOk;
  double residual_dot_direction = 0.0;  // <e, D>
  double direction_sq = 0.0;            // <D, D>
};

/// Minimizer over s >= 0 of ||P_Omega(U R V^T + s (xi_U R V^T + U xi_R V^T + U R xi_V^T)) - P_Omega(X*)||^2,
/// i.e. s* = -<e, D> / <D, D>. O(|Omega| r).
inline LinearizedStep initial_step(const CompletionProblem& problem, const FixedRankPoint& x,
                                   const HorizontalVector& xi) {
  const ObservedEntries& obs = problem.observed();
  detail::require_point_matches(obs, x, "initial_step");
  detail::require_anchor(x, xi.triple(), "initial_step");
  const Matrix ur_t = (x.U() * x.R()).transpose();
  const Matrix v_t = x.V().transpose();
  const Matrix a_t = (xi.u() * x.R() + x.U() * xi.r()).transpose();
  const Matrix xv_t = xi.v().transpose();
  double ed = 0.0;
  double dd = 0.0;
  for (const Entry& en : obs.entries()) {
    const double e = ur_t.col(en.row).dot(v_t.col(en.col)) - en.value;
    const double d = a_t.col(en.row).dot(v_t.col(en.col)) + ur_t.col(en.row).dot(xv_t.col(en.col));
    ed += e * d;
    dd += d * d;
  }
  kernel_counters().sparse_flops += (6 * static_cast<std::uint64_t>(x.rank()) + 6) * obs.size();
  LinearizedStep out{0.0, LinearizedStep::Status::kOk, ed, dd};
  if (!(dd > 0.0)) {
    out.status = LinearizedStep::Status::kDegenerate;
  } else if (ed > 0.0) {
    out.status = LinearizedStep::Status::kNonDescent;
    out.step = -ed / dd;
  } else {
    out.step = -ed / dd;
  }
  return out;
}

}  // namespace r3mc
