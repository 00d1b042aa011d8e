#pragma once

// Dense kernels on r x r and n x r blocks.
//
// Everything here is a pure function of its arguments. Spectral work uses
// Jacobi iterations (two-sided cyclic for symmetric eigenproblems, one-sided
// Hestenes for the SVD): r is small and Jacobi keeps high relative accuracy.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "r3mc/errors.hpp"

namespace r3mc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace jacobi {
inline constexpr double kOffDiagonalTolerance = 1e-14;
inline constexpr int kMaxSweeps = 100;
}  // namespace jacobi

namespace detail {

inline void require_square(const Matrix& d, const char* what) {
  if (d.rows() != d.cols() || d.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << d.rows() << "x" << d.cols();
    throw DimensionError(os.str());
  }
}

inline std::string shape(const Matrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace detail

/// Symmetric part (D + D^T) / 2, stored exactly symmetric.
inline Matrix sym(const Matrix& d) {
  detail::require_square(d, "sym");
  const Index n = d.rows();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j) {
    out(j, j) = d(j, j);
    for (Index i = j + 1; i < n; ++i) {
      const double v = 0.5 * (d(i, j) + d(j, i));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

/// Skew-symmetric part (D - D^T) / 2, stored exactly antisymmetric.
inline Matrix skew(const Matrix& d) {
  detail::require_square(d, "skew");
  const Index n = d.rows();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j) {
    out(j, j) = 0.0;
    for (Index i = j + 1; i < n; ++i) {
      const double v = 0.5 * (d(i, j) - d(j, i));
      out(i, j) = v;
      out(j, i) = -v;
    }
  }
  return out;
}

/// ||D + D^T||_F <= tol * max(1, ||D||_F)
inline bool is_skew(const Matrix& d, double tol) {
  return d.rows() == d.cols() && (d + d.transpose()).norm() <= tol * std::max(1.0, d.norm());
}

inline bool is_symmetric(const Matrix& d, double tol) {
  return d.rows() == d.cols() && (d - d.transpose()).norm() <= tol * std::max(1.0, d.norm());
}

/// Eigen-decomposition A = vectors * diag(values) * vectors^T, values descending.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};

/// Cyclic Jacobi for a symmetric matrix (only the symmetric part is used).
inline SymmetricEigen symmetric_eigen(const Matrix& a_in) {
  detail::require_square(a_in, "symmetric_eigen");
  const Index n = a_in.rows();
  Matrix a = sym(a_in);
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.norm();

  auto off_norm = [&] {
    double s = 0.0;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < jacobi::kMaxSweeps; ++sweep) {
    if (off_norm() <= jacobi::kOffDiagonalTolerance * scale) break;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

/// Thin SVD A = left * diag(singular) * right^T, singular values descending.
/// For rows >= cols, left is rows x cols; otherwise computed on the transpose.
struct Svd {
  Matrix left;
  Vector singular;
  Matrix right;
};

/// One-sided (Hestenes) Jacobi SVD.
inline Svd thin_svd(const Matrix& a_in) {
  if (a_in.rows() == 0 || a_in.cols() == 0) throw DimensionError("thin_svd: empty matrix");
  if (a_in.rows() < a_in.cols()) {
    Svd t = thin_svd(a_in.transpose());
    return Svd{std::move(t.right), std::move(t.singular), std::move(t.left)};
  }
  const Index cols = a_in.cols();
  Matrix a = a_in;
  Matrix v = Matrix::Identity(cols, cols);
  // Long dot products carry ~sqrt(rows) eps of rounding noise.
  const double orth_tol = std::max(jacobi::kOffDiagonalTolerance,
                                   4.0 * std::sqrt(static_cast<double>(a.rows())) * std::numeric_limits<double>::epsilon());

  for (int sweep = 0; sweep < jacobi::kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p < cols - 1; ++p) {
      for (Index q = p + 1; q < cols; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= orth_tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index k = 0; k < a.rows(); ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < cols; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(cols);
  for (Index k = 0; k < cols; ++k) norms(k) = a.col(k).norm();
  std::vector<Index> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return norms(i) > norms(j); });

  Svd out{Matrix(a.rows(), cols), Vector(cols), Matrix(cols, cols)};
  for (Index k = 0; k < cols; ++k) {
    const Index src = order[k];
    out.singular(k) = norms(src);
    out.right.col(k) = v.col(src);
    if (norms(src) > 0.0) {
      out.left.col(k) = a.col(src) / norms(src);
    } else {
      out.left.col(k).setZero();
    }
  }
  return out;
}

/// Ratio sigma_min / sigma_max (0 for a zero matrix).
inline double inverse_condition(const Matrix& a) {
  const Svd s = thin_svd(a);
  const double top = s.singular(0);
  return top > 0.0 ? s.singular(s.singular.size() - 1) / top : 0.0;
}

/// Orthonormal polar factor uf(A) = A (A^T A)^{-1/2} of an n x r matrix with
/// full column rank, computed from the SVD as left * right^T.
inline Matrix polar_orthonormal_factor(const Matrix& a, double rank_tolerance = 1e-12) {
  if (a.rows() < a.cols()) {
    throw DimensionError("polar_orthonormal_factor: need rows >= cols, got " + detail::shape(a));
  }
  const Svd s = thin_svd(a);
  const double top = s.singular(0);
  const double bottom = s.singular(s.singular.size() - 1);
  if (!(top > 0.0) || !(bottom > rank_tolerance * top) || !std::isfinite(top)) {
    std::ostringstream os;
    os << "polar_orthonormal_factor: rank-deficient input, sigma_min/sigma_max = "
       << (top > 0.0 ? bottom / top : 0.0) << " (tolerance " << rank_tolerance << ")";
    throw SingularityError(os.str());
  }
  return s.left * s.right.transpose();
}

/// Spectral data of a symmetric positive-definite matrix.
struct SpdFactorization {
  Vector eigenvalues;  // strictly positive, descending
  Matrix eigenvectors;

  Index size() const { return eigenvalues.size(); }

  /// M * P^{-1} for the factored P.
  Matrix solve_right(const Matrix& m) const {
    return ((m * eigenvectors) * eigenvalues.cwiseInverse().asDiagonal()) * eigenvectors.transpose();
  }
};

inline SpdFactorization factor_spd(const Matrix& p) {
  SymmetricEigen e = symmetric_eigen(p);
  const double smallest = e.values(e.values.size() - 1);
  if (!(smallest > 0.0)) {
    std::ostringstream os;
    os << "factor_spd: matrix is not positive definite (smallest eigenvalue " << smallest << ")";
    throw SingularityError(os.str());
  }
  return SpdFactorization{std::move(e.values), std::move(e.vectors)};
}

/// Solves P B + B P = Q for symmetric B given the factorization of P.
inline Matrix solve_lyapunov_spd(const SpdFactorization& p, const Matrix& q) {
  const Index r = p.size();
  if (q.rows() != r || q.cols() != r) {
    throw DimensionError("solve_lyapunov_spd: Q is " + detail::shape(q) + ", expected " + std::to_string(r) +
                         "x" + std::to_string(r));
  }
  const Matrix& e = p.eigenvectors;
  Matrix rotated = e.transpose() * sym(q) * e;
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < r; ++i) rotated(i, j) /= p.eigenvalues(i) + p.eigenvalues(j);
  return sym(e * rotated * e.transpose());
}

inline Matrix solve_lyapunov_spd(const Matrix& p, const Matrix& q) {
  detail::require_square(p, "solve_lyapunov_spd");
  return solve_lyapunov_spd(factor_spd(p), q);
}

/// Skew solution pair of the coupled system
///   R R^T W1 + W1 R R^T - R W2 R^T = C1
///   R^T R W2 + W2 R^T R - R^T W1 R = C2.
struct CoupledLyapunovSolution {
  Matrix omega1;
  Matrix omega2;
};

/// The coupled system written in the singular bases of R = A S B^T: takes
/// A^T C1 A and B^T C2 B, returns A^T W1 A and B^T W2 B. Each entry pair
/// (i, j) is a 2x2 system with diagonal s_i^2 + s_j^2 and off-diagonal -s_i s_j.
inline CoupledLyapunovSolution solve_coupled_lyapunov_rotated(const Vector& s, const Matrix& rc1, const Matrix& rc2,
                                                              double singular_tolerance = 1e-12) {
  const Index n = s.size();
  if (rc1.rows() != n || rc1.cols() != n || rc2.rows() != n || rc2.cols() != n) {
    throw DimensionError("solve_coupled_lyapunov: right-hand sides must be " + std::to_string(n) + "x" +
                         std::to_string(n));
  }
  const double smin = s(n - 1);
  if (!(smin > singular_tolerance * s(0))) {
    std::ostringstream os;
    os << "solve_coupled_lyapunov: R is singular (sigma_min/sigma_max = " << (s(0) > 0 ? smin / s(0) : 0.0) << ")";
    throw SingularityError(os.str());
  }
  Matrix w1 = Matrix::Zero(n, n);
  Matrix w2 = Matrix::Zero(n, n);
  const double det_floor = 3.0 * smin * smin * smin * smin;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i == j) continue;
      const double diag = s(i) * s(i) + s(j) * s(j);
      const double off = s(i) * s(j);
      const double det = diag * diag - off * off;
      if (!(det > 0.0) || !(det >= det_floor * (1.0 - 1e-12))) {
        throw SingularityError("solve_coupled_lyapunov: 2x2 block determinant below 3 sigma_min^4");
      }
      w1(i, j) = (diag * rc1(i, j) + off * rc2(i, j)) / det;
      w2(i, j) = (diag * rc2(i, j) + off * rc1(i, j)) / det;
    }
  }
  return CoupledLyapunovSolution{skew(w1), skew(w2)};
}

inline CoupledLyapunovSolution solve_coupled_lyapunov(const Svd& svd, const Matrix& c1, const Matrix& c2,
                                                      double singular_tolerance = 1e-12) {
  const Index n = svd.singular.size();
  if (svd.left.rows() != n || svd.right.rows() != n) {
    throw DimensionError("solve_coupled_lyapunov: expected the SVD of a square matrix");
  }
  if (c1.rows() != n || c1.cols() != n || c2.rows() != n || c2.cols() != n) {
    throw DimensionError("solve_coupled_lyapunov: right-hand sides must be " + std::to_string(n) + "x" +
                         std::to_string(n));
  }
  if (!is_skew(c1, 1e-10) || !is_skew(c2, 1e-10)) {
    throw ContractViolation("solve_coupled_lyapunov: right-hand sides must be skew-symmetric");
  }
  const CoupledLyapunovSolution w =
      solve_coupled_lyapunov_rotated(svd.singular, svd.left.transpose() * c1 * svd.left,
                                     svd.right.transpose() * c2 * svd.right, singular_tolerance);
  return CoupledLyapunovSolution{skew(svd.left * w.omega1 * svd.left.transpose()),
                                 skew(svd.right * w.omega2 * svd.right.transpose())};
}

inline CoupledLyapunovSolution solve_coupled_lyapunov(const Matrix& r, const Matrix& c1, const Matrix& c2,
                                                      double singular_tolerance = 1e-12) {
  detail::require_square(r, "solve_coupled_lyapunov");
  return solve_coupled_lyapunov(thin_svd(r), c1, c2, singular_tolerance);
}

}  // namespace r3mc
