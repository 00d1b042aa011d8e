#pragma once

// Reference computations for the tests. Everything here works on dense
// matrices with Eigen's general solvers so it shares no code path with the
// library kernels it checks.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "r3mc/manifold.hpp"
#include "r3mc/problem.hpp"
#include "r3mc/rng.hpp"

namespace oracle {

using r3mc::Index;
using r3mc::Matrix;
using r3mc::Vector;

// Release builds default the library's invariant checks off; tests want them.
inline const bool kInvariantChecksOn = (r3mc::set_invariant_checks(true), true);

inline Vector vec(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

inline Matrix unvec(const Vector& v, Index rows, Index cols) { return Eigen::Map<const Matrix>(v.data(), rows, cols); }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

/// B with P B + B P = Q via the r^2 x r^2 Kronecker system.
inline Matrix lyapunov(const Matrix& p, const Matrix& q) {
  const Index r = p.rows();
  const Matrix eye = Matrix::Identity(r, r);
  const Matrix op = kron(eye, p) + kron(p.transpose(), eye);
  return unvec(op.fullPivLu().solve(vec(q)), r, r);
}

/// (W1, W2) with P W1 + W1 P - R W2 R^T = C1, Q W2 + W2 Q - R^T W1 R = C2,
/// P = R R^T, Q = R^T R, as one 2r^2 linear system.
inline std::pair<Matrix, Matrix> coupled_lyapunov(const Matrix& r, const Matrix& c1, const Matrix& c2) {
  const Index n = r.rows();
  const Index n2 = n * n;
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix p = r * r.transpose();
  const Matrix q = r.transpose() * r;
  Matrix op = Matrix::Zero(2 * n2, 2 * n2);
  op.topLeftCorner(n2, n2) = kron(eye, p) + kron(p.transpose(), eye);
  op.topRightCorner(n2, n2) = -kron(r, r);
  op.bottomLeftCorner(n2, n2) = -kron(r.transpose(), r.transpose());
  op.bottomRightCorner(n2, n2) = kron(eye, q) + kron(q.transpose(), eye);
  Vector rhs(2 * n2);
  rhs << vec(c1), vec(c2);
  const Vector w = op.fullPivLu().solve(rhs);
  return {unvec(w.head(n2), n, n), unvec(w.tail(n2), n, n)};
}

inline double relative_error(const Matrix& got, const Matrix& want) {
  return (got - want).norm() / std::max(want.norm(), std::numeric_limits<double>::min());
}

/// Dense residual matrix P_Omega(X) - P_Omega(X*).
inline Matrix dense_residual(const r3mc::ObservedEntries& obs, const Matrix& x) {
  Matrix e = Matrix::Zero(obs.rows(), obs.cols());
  for (const r3mc::Entry& en : obs.entries()) e(en.row, en.col) = x(en.row, en.col) - en.value;
  return e;
}

inline double dense_cost(const r3mc::ObservedEntries& obs, const Matrix& x) {
  return dense_residual(obs, x).squaredNorm() / static_cast<double>(obs.size());
}

/// Differential of X = U R V^T along an ambient triple.
inline Matrix dense_differential(const r3mc::FixedRankPoint& x, const r3mc::Triple& t) {
  return t.u * x.R() * x.V().transpose() + x.U() * t.r * x.V().transpose() +
         x.U() * x.R() * t.v.transpose();
}

/// Exact directional derivative of the cost along an ambient triple.
inline double directional_derivative(const r3mc::ObservedEntries& obs, const r3mc::FixedRankPoint& x,
                                     const r3mc::Triple& t) {
  const Matrix e = dense_residual(obs, x.dense());
  const Matrix d = dense_differential(x, t);
  double s = 0.0;
  for (const r3mc::Entry& en : obs.entries()) s += e(en.row, en.col) * d(en.row, en.col);
  return 2.0 * s / static_cast<double>(obs.size());
}

/// Metric written out directly from its definition.
inline double metric(const r3mc::FixedRankPoint& x, const r3mc::Triple& a, const r3mc::Triple& b) {
  const Matrix rrt = x.R() * x.R().transpose();
  const Matrix rtr = x.R().transpose() * x.R();
  return (rrt * a.u.transpose() * b.u).trace() + (a.r.transpose() * b.r).trace() +
         (rtr * a.v.transpose() * b.v).trace();
}

/// Minimizer of a smooth unimodal function on [lo, hi]: coarse grid, golden
/// section, then the vertex of a parabola through three nearby samples.
inline double minimize_1d(const std::function<double(double)>& f, double lo, double hi, int grid = 400) {
  double best = lo;
  double fbest = f(lo);
  const double h = (hi - lo) / grid;
  for (int k = 1; k <= grid; ++k) {
    const double s = lo + k * h;
    const double fs = f(s);
    if (fs < fbest) {
      fbest = fs;
      best = s;
    }
  }
  double a = best - h;
  double b = best + h;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-10 * std::abs(c); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (a + b);
  const double w = std::max(h, std::abs(mid) * 1e-2);
  const double f0 = f(mid - w);
  const double f1 = f(mid);
  const double f2 = f(mid + w);
  const double curvature = f0 - 2.0 * f1 + f2;
  if (!(curvature > 0.0)) return mid;
  return mid + 0.5 * w * (f0 - f2) / curvature;
}

/// Uniformly random observation pattern with `count` entries and Gaussian values.
inline r3mc::ObservedEntries random_pattern(Index n, Index m, std::uint64_t count, std::uint64_t seed) {
  r3mc::Rng rng(seed, 1000);
  std::vector<r3mc::Entry> entries;
  for (std::uint64_t k : r3mc::sample_without_replacement(static_cast<std::uint64_t>(n * m), count, rng)) {
    entries.push_back(r3mc::Entry{static_cast<Index>(k / static_cast<std::uint64_t>(m)),
                                  static_cast<Index>(k % static_cast<std::uint64_t>(m)), rng.normal()});
  }
  return r3mc::ObservedEntries(n, m, std::move(entries));
}

inline Matrix random_matrix(r3mc::Rng& rng, Index rows, Index cols) {
  Matrix a(rows, cols);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a;
}

inline r3mc::Triple random_triple(r3mc::Rng& rng, Index n, Index m, Index r) {
  return r3mc::Triple{random_matrix(rng, n, r), random_matrix(rng, r, r), random_matrix(rng, m, r)};
}

}  // namespace oracle
