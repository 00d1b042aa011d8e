#pragma once

// Quotient geometry of rank-r matrices X = U R V^T with U in St(r, n),
// R in GL(r), V in St(r, m), modulo (U, R, V) ~ (U O1, O1^T R O2, V O2).
//
// The total space carries the metric
//   g(xi, eta) = tr(R R^T xi_U^T eta_U) + tr(xi_R^T eta_R) + tr(R^T R xi_V^T eta_V).
// Horizontal vectors are the metric complement of the vertical space
// { (U W1, R W2 - W1 R, V W2) : W1, W2 skew }.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <utility>

#include "r3mc/errors.hpp"
#include "r3mc/rng.hpp"
#include "r3mc/smallmat.hpp"

namespace r3mc {

namespace tolerance {
inline constexpr double kInvariant = 1e-10;
inline constexpr double kExact = 1e-12;
inline constexpr double kRankRatio = 1e-12;
}  // namespace tolerance

/// Construction-time invariant checks cost O(n r^2); on in debug builds and
/// in the test suites, opt-in for release.
inline std::atomic<bool>& invariant_checks_flag() {
#ifdef NDEBUG
  static std::atomic<bool> flag{false};
#else
  static std::atomic<bool> flag{true};
#endif
  return flag;
}
inline bool invariant_checks_enabled() { return invariant_checks_flag().load(std::memory_order_relaxed); }
inline void set_invariant_checks(bool on) { invariant_checks_flag().store(on, std::memory_order_relaxed); }

/// Representative (U, R, V) of an equivalence class of rank-r matrices.
class FixedRankPoint {
 public:
  FixedRankPoint(Matrix u, Matrix r, Matrix v) : u_(std::move(u)), r_(std::move(r)), v_(std::move(v)) {
    if (u_.cols() != r_.rows() || r_.rows() != r_.cols() || v_.cols() != r_.cols() || r_.rows() == 0) {
      std::ostringstream os;
      os << "FixedRankPoint: incompatible factor shapes U " << u_.rows() << "x" << u_.cols() << ", R "
         << r_.rows() << "x" << r_.cols() << ", V " << v_.rows() << "x" << v_.cols();
      throw DimensionError(os.str());
    }
    if (rank() > rows() || rank() > cols()) throw DimensionError("FixedRankPoint: rank exceeds min(n, m)");
    rrt_ = r_ * r_.transpose();
    rtr_ = r_.transpose() * r_;
    core_ = thin_svd(r_);
    const double top = core_.singular(0);
    const double ratio = top > 0.0 ? core_.singular(rank() - 1) / top : 0.0;
    if (!(ratio > tolerance::kRankRatio) || !std::isfinite(top)) {
      std::ostringstream os;
      os << "FixedRankPoint: R is numerically singular (sigma_min/sigma_max = " << ratio << ")";
      throw ContractViolation(os.str());
    }
    if (invariant_checks_enabled()) validate();
  }

  const Matrix& U() const noexcept { return u_; }
  const Matrix& R() const noexcept { return r_; }
  const Matrix& V() const noexcept { return v_; }
  /// R R^T
  const Matrix& left_gram() const noexcept { return rrt_; }
  /// R^T R
  const Matrix& right_gram() const noexcept { return rtr_; }
  /// SVD R = A S B^T, computed once per point.
  const Svd& core_svd() const noexcept { return core_; }
  /// R R^T = A S^2 A^T
  SpdFactorization left_gram_factor() const {
    return SpdFactorization{core_.singular.cwiseAbs2(), core_.left};
  }
  /// R^T R = B S^2 B^T
  SpdFactorization right_gram_factor() const {
    return SpdFactorization{core_.singular.cwiseAbs2(), core_.right};
  }

  Index rows() const noexcept { return u_.rows(); }
  Index cols() const noexcept { return v_.rows(); }
  Index rank() const noexcept { return r_.rows(); }

  Matrix dense() const { return u_ * r_ * v_.transpose(); }

  /// Throws ContractViolation unless U, V have orthonormal columns to 1e-10.
  /// (R invertibility is always checked at construction.)
  void validate() const {
    const Matrix eye = Matrix::Identity(rank(), rank());
    const double u_err = (u_.transpose() * u_ - eye).norm();
    const double v_err = (v_.transpose() * v_ - eye).norm();
    if (!(u_err <= tolerance::kInvariant) || !(v_err <= tolerance::kInvariant)) {
      std::ostringstream os;
      os << "FixedRankPoint: factors not orthonormal (|U^T U - I| = " << u_err << ", |V^T V - I| = " << v_err
         << ")";
      throw ContractViolation(os.str());
    }
  }

 private:
  Matrix u_, r_, v_;
  Matrix rrt_, rtr_;
  Svd core_;
};

/// A triple (Z_U, Z_R, Z_V) of the ambient space R^{n x r} x R^{r x r} x R^{m x r};
/// tangent vectors of the total space are triples with U^T Z_U and V^T Z_V skew.
struct Triple {
  Matrix u;
  Matrix r;
  Matrix v;

  static Triple zeros(Index n, Index m, Index rank) {
    return Triple{Matrix::Zero(n, rank), Matrix::Zero(rank, rank), Matrix::Zero(m, rank)};
  }
  static Triple zeros_like(const FixedRankPoint& x) { return zeros(x.rows(), x.cols(), x.rank()); }

  Triple& operator+=(const Triple& o) {
    u += o.u;
    r += o.r;
    v += o.v;
    return *this;
  }
  Triple& operator-=(const Triple& o) {
    u -= o.u;
    r -= o.r;
    v -= o.v;
    return *this;
  }
  Triple& operator*=(double s) {
    u *= s;
    r *= s;
    v *= s;
    return *this;
  }
  friend Triple operator+(Triple a, const Triple& b) { return a += b; }
  friend Triple operator-(Triple a, const Triple& b) { return a -= b; }
  friend Triple operator*(double s, Triple a) { return a *= s; }
  friend Triple operator-(Triple a) { return a *= -1.0; }

  /// Plain Frobenius norm of the stacked triple.
  double euclidean_norm() const { return std::sqrt(u.squaredNorm() + r.squaredNorm() + v.squaredNorm()); }
};

using TangentTriple = Triple;

/// Horizontal lift of a quotient tangent vector. Only the horizontal
/// projection (and operations closed on the horizontal space) produce one.
class HorizontalVector {
 public:
  const Triple& triple() const noexcept { return t_; }
  const Matrix& u() const noexcept { return t_.u; }
  const Matrix& r() const noexcept { return t_.r; }
  const Matrix& v() const noexcept { return t_.v; }

  /// Wraps a triple the caller knows to be horizontal at its anchor (e.g. a
  /// Riemannian gradient). Checked when invariant checks are enabled.
  static HorizontalVector assume_horizontal(const FixedRankPoint& x, Triple t);

  static HorizontalVector zeros_like(const FixedRankPoint& x) { return HorizontalVector(Triple::zeros_like(x)); }

  HorizontalVector& operator+=(const HorizontalVector& o) {
    t_ += o.t_;
    return *this;
  }
  HorizontalVector& operator-=(const HorizontalVector& o) {
    t_ -= o.t_;
    return *this;
  }
  HorizontalVector& operator*=(double s) {
    t_ *= s;
    return *this;
  }
  friend HorizontalVector operator+(HorizontalVector a, const HorizontalVector& b) { return a += b; }
  friend HorizontalVector operator-(HorizontalVector a, const HorizontalVector& b) { return a -= b; }
  friend HorizontalVector operator*(double s, HorizontalVector a) { return a *= s; }
  friend HorizontalVector operator-(HorizontalVector a) { return a *= -1.0; }

 private:
  explicit HorizontalVector(Triple t) : t_(std::move(t)) {}
  friend HorizontalVector project_to_horizontal(const FixedRankPoint& x, const Triple& xi);
  Triple t_;
};

namespace detail {

inline void require_anchor(const FixedRankPoint& x, const Triple& t, const char* what) {
  if (t.u.rows() != x.rows() || t.u.cols() != x.rank() || t.r.rows() != x.rank() || t.r.cols() != x.rank() ||
      t.v.rows() != x.cols() || t.v.cols() != x.rank()) {
    std::ostringstream os;
    os << what << ": triple shapes (" << shape(t.u) << ", " << shape(t.r) << ", " << shape(t.v)
       << ") do not match point (" << x.rows() << ", " << x.cols() << ", rank " << x.rank() << ")";
    throw DimensionError(os.str());
  }
}

}  // namespace detail

inline double metric(const FixedRankPoint& x, const Triple& a, const Triple& b) {
  detail::require_anchor(x, a, "metric");
  detail::require_anchor(x, b, "metric");
  // tr(P A^T B) = sum_ij (A P)_ij B_ij for symmetric P
  const double u_part = (a.u * x.left_gram()).cwiseProduct(b.u).sum();
  const double r_part = a.r.cwiseProduct(b.r).sum();
  const double v_part = (a.v * x.right_gram()).cwiseProduct(b.v).sum();
  return u_part + r_part + v_part;
}

inline double metric(const FixedRankPoint& x, const HorizontalVector& a, const HorizontalVector& b) {
  return metric(x, a.triple(), b.triple());
}

inline double metric_norm(const FixedRankPoint& x, const HorizontalVector& a) {
  return std::sqrt(std::max(0.0, metric(x, a, a)));
}

/// Tangent space membership: U^T Z_U and V^T Z_V skew to `tol` (relative).
inline bool is_tangent(const FixedRankPoint& x, const Triple& z, double tol = tolerance::kInvariant) {
  detail::require_anchor(x, z, "is_tangent");
  const Matrix a = x.U().transpose() * z.u;
  const Matrix b = x.V().transpose() * z.v;
  return (a + a.transpose()).norm() <= tol * std::max(1.0, z.u.norm()) &&
         (b + b.transpose()).norm() <= tol * std::max(1.0, z.v.norm());
}

/// Horizontal membership: tangent, and metric-orthogonal to the vertical
/// space, i.e. skew(U^T xi_U R R^T - xi_R R^T) = 0 and
/// skew(V^T xi_V R^T R + R^T xi_R) = 0.
inline bool is_horizontal(const FixedRankPoint& x, const Triple& z, double tol = tolerance::kInvariant) {
  if (!is_tangent(x, z, tol)) return false;
  const Matrix& r = x.R();
  const Matrix c1 = x.U().transpose() * z.u * x.left_gram() - z.r * r.transpose();
  const Matrix c2 = x.V().transpose() * z.v * x.right_gram() + r.transpose() * z.r;
  const double scale = std::max(
      1.0, x.left_gram().norm() * z.u.norm() + x.right_gram().norm() * z.v.norm() + r.norm() * z.r.norm());
  return skew(c1).norm() <= tol * scale && skew(c2).norm() <= tol * scale;
}

inline HorizontalVector HorizontalVector::assume_horizontal(const FixedRankPoint& x, Triple t) {
  detail::require_anchor(x, t, "HorizontalVector");
  if (invariant_checks_enabled() && !is_horizontal(x, t)) {
    throw ContractViolation("HorizontalVector: triple is not horizontal at its anchor");
  }
  return HorizontalVector(std::move(t));
}

/// Psi_x: metric-orthogonal projection of an ambient triple onto the tangent
/// space, removing (U B_U (R R^T)^{-1}, 0, V B_V (R^T R)^{-1}) where
/// R R^T B_U + B_U R R^T = R R^T sym2(U^T Z_U) R R^T (likewise for V).
/// With R R^T = A L A^T the correction is A K A^T, K_ij = l_i S_ij / (l_i + l_j),
/// S = A^T (U^T Z_U + Z_U^T U) A; working in that basis avoids squaring cond(R).
inline Triple project_to_tangent(const FixedRankPoint& x, const Triple& z) {
  detail::require_anchor(x, z, "project_to_tangent");
  const Svd& core = x.core_svd();
  const Index r = x.rank();
  auto correction = [&](const Matrix& basis, const Matrix& q, const Matrix& zq) {
    const Matrix m = basis.transpose() * (q.transpose() * zq) * basis;
    Matrix k(r, r);
    for (Index j = 0; j < r; ++j) {
      for (Index i = 0; i < r; ++i) {
        const double li = core.singular(i) * core.singular(i);
        const double lj = core.singular(j) * core.singular(j);
        k(i, j) = li * (m(i, j) + m(j, i)) / (li + lj);
      }
    }
    return Matrix(basis * k * basis.transpose());
  };
  return Triple{z.u - x.U() * correction(core.left, x.U(), z.u), z.r,
                z.v - x.V() * correction(core.right, x.V(), z.v)};
}

/// Vertical vector (U W1, R W2 - W1 R, V W2) for skew W1, W2.
inline Triple vertical_lift(const FixedRankPoint& x, const Matrix& omega1, const Matrix& omega2) {
  const Index r = x.rank();
  if (omega1.rows() != r || omega1.cols() != r || omega2.rows() != r || omega2.cols() != r) {
    throw DimensionError("vertical_lift: skew generators must be " + std::to_string(r) + "x" + std::to_string(r));
  }
  if (!is_skew(omega1, tolerance::kInvariant) || !is_skew(omega2, tolerance::kInvariant)) {
    throw ContractViolation("vertical_lift: generators must be skew-symmetric");
  }
  return Triple{x.U() * omega1, x.R() * omega2 - omega1 * x.R(), x.V() * omega2};
}

/// Pi_x: removes the vertical component of a tangent vector by solving the
/// coupled Lyapunov system for the skew pair (W1, W2), set up directly in the
/// singular bases of R = A S B^T.
inline HorizontalVector project_to_horizontal(const FixedRankPoint& x, const Triple& xi) {
  detail::require_anchor(x, xi, "project_to_horizontal");
  const Svd& core = x.core_svd();
  const Matrix& a = core.left;
  const Matrix& b = core.right;
  const Vector& s = core.singular;
  const Vector l = s.cwiseAbs2();
  const Matrix mu = a.transpose() * (x.U().transpose() * xi.u) * a;
  const Matrix mv = b.transpose() * (x.V().transpose() * xi.v) * b;
  const Matrix xr = a.transpose() * xi.r * b;
  // A^T C1 A = skew(Mu L) + skew(S Xr^T),  B^T C2 B = skew(Mv L) + skew(S Xr).
  const Matrix c1 = skew(mu * l.asDiagonal()) + skew(s.asDiagonal() * xr.transpose());
  const Matrix c2 = skew(mv * l.asDiagonal()) + skew(s.asDiagonal() * xr);
  const CoupledLyapunovSolution w = solve_coupled_lyapunov_rotated(s, c1, c2);
  const Matrix w1 = skew(a * w.omega1 * a.transpose());
  const Matrix w2 = skew(b * w.omega2 * b.transpose());
  // W1 R - R W2 = A (W1' S - S W2') B^T
  const Matrix dr = a * (w.omega1 * s.asDiagonal() - s.asDiagonal() * w.omega2) * b.transpose();
  return HorizontalVector(Triple{xi.u - x.U() * w1, xi.r + dr, xi.v - x.V() * w2});
}

/// (uf(U + s xi_U), R + s xi_R, uf(V + s xi_V)). s = 0 returns x unchanged.
inline FixedRankPoint retract(const FixedRankPoint& x, const HorizontalVector& xi, double s) {
  detail::require_anchor(x, xi.triple(), "retract");
  if (s == 0.0) return x;
  try {
    Matrix r = x.R() + s * xi.r();
    return FixedRankPoint(polar_orthonormal_factor(x.U() + s * xi.u()), std::move(r),
                          polar_orthonormal_factor(x.V() + s * xi.v()));
  } catch (const SingularityError& e) {
    throw RetractionFailure(std::string("retract: ") + e.what());
  } catch (const ContractViolation& e) {
    throw RetractionFailure(std::string("retract: ") + e.what());
  }
}

/// Transport of a horizontal vector from another anchor onto the horizontal
/// space at y: Pi_y(Psi_y(xi)).
inline HorizontalVector transport_to(const FixedRankPoint& y, const HorizontalVector& xi) {
  return project_to_horizontal(y, project_to_tangent(y, xi.triple()));
}

/// Vector transport of xi along eta: lands at retract(x, eta, s).
inline HorizontalVector transport(const FixedRankPoint& x, const HorizontalVector& eta, const HorizontalVector& xi,
                                  double s) {
  detail::require_anchor(x, xi.triple(), "transport");
  return transport_to(retract(x, eta, s), xi);
}

/// (U O1, O1^T R O2, V O2); leaves U R V^T unchanged.
inline FixedRankPoint group_action(const FixedRankPoint& x, const Matrix& o1, const Matrix& o2) {
  const Index r = x.rank();
  if (o1.rows() != r || o1.cols() != r || o2.rows() != r || o2.cols() != r) {
    throw DimensionError("group_action: orthogonal factors must be " + std::to_string(r) + "x" + std::to_string(r));
  }
  const Matrix eye = Matrix::Identity(r, r);
  if ((o1.transpose() * o1 - eye).norm() > tolerance::kInvariant ||
      (o2.transpose() * o2 - eye).norm() > tolerance::kInvariant) {
    throw ContractViolation("group_action: factors must be orthogonal");
  }
  return FixedRankPoint(x.U() * o1, o1.transpose() * x.R() * o2, x.V() * o2);
}

/// Lift of a tangent triple to the representative group_action(x, O1, O2).
inline Triple act_on_triple(const Triple& t, const Matrix& o1, const Matrix& o2) {
  return Triple{t.u * o1, o1.transpose() * t.r * o2, t.v * o2};
}

namespace detail {

inline Matrix gaussian_matrix(Rng& rng, Index rows, Index cols) {
  Matrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = rng.normal();
  return a;
}

}  // namespace detail

/// Random point: U, V polar factors of Gaussian matrices, R Gaussian with
/// sigma_min/sigma_max > 1e-6 (resampled otherwise).
inline FixedRankPoint random_point(Index n, Index m, Index r, std::uint64_t seed) {
  if (r < 1 || n < 1 || m < 1 || r > n || r > m) {
    std::ostringstream os;
    os << "random_point: need 1 <= r <= min(n, m), got n=" << n << " m=" << m << " r=" << r;
    throw DimensionError(os.str());
  }
  Rng rng(seed, streams::kPoint);
  Matrix u = polar_orthonormal_factor(detail::gaussian_matrix(rng, n, r));
  Matrix v = polar_orthonormal_factor(detail::gaussian_matrix(rng, m, r));
  Matrix core = detail::gaussian_matrix(rng, r, r);
  while (!(inverse_condition(core) > 1e-6)) core = detail::gaussian_matrix(rng, r, r);
  return FixedRankPoint(std::move(u), std::move(core), std::move(v));
}

/// Gaussian ambient draw pushed through Psi then Pi, scaled to unit metric norm.
inline HorizontalVector random_horizontal(const FixedRankPoint& x, std::uint64_t seed) {
  Rng rng(seed, streams::kHorizontal);
  for (;;) {
    Triple z{detail::gaussian_matrix(rng, x.rows(), x.rank()), detail::gaussian_matrix(rng, x.rank(), x.rank()),
             detail::gaussian_matrix(rng, x.cols(), x.rank())};
    HorizontalVector h = project_to_horizontal(x, project_to_tangent(x, z));
    const double norm = metric_norm(x, h);
    if (norm > 0.0 && std::isfinite(norm)) return (1.0 / norm) * h;
  }
}

/// Random skew r x r matrix with standard-normal strict lower triangle.
inline Matrix random_skew(Index r, Rng& rng) {
  Matrix a = Matrix::Zero(r, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = j + 1; i < r; ++i) {
      a(i, j) = rng.normal();
      a(j, i) = -a(i, j);
    }
  return a;
}

/// Random orthogonal r x r matrix (polar factor of a Gaussian).
inline Matrix random_orthogonal(Index r, Rng& rng) { return polar_orthonormal_factor(detail::gaussian_matrix(rng, r, r)); }

}  // namespace r3mc
