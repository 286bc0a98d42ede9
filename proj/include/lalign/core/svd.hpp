#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lalign/core/matrix.hpp"

namespace lalign {

struct SvdResult {
  Matrix u;  // rows(m) x min-side columns (thin)
  Vector s;  // nonincreasing, nonnegative
  Matrix v;  // cols(m) x min-side columns
};

namespace detail {

// One-sided Jacobi on an m x n work matrix with m >= n. Columns of `work`
// are rotated until pairwise orthogonal; V accumulates the rotations.
inline SvdResult jacobi_svd_tall(Matrix work) {
  const std::size_t m = work.rows();
  const std::size_t n = work.cols();
  Matrix v = Matrix::identity(n);

  constexpr int kMaxSweeps = 60;
  constexpr double kTol = 1e-14;
  bool converged = (n < 2);
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = work(i, p);
          const double y = work(i, q);
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        if (std::abs(apq) <= kTol * std::sqrt(app * aqq)) continue;
        converged = false;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = work(i, p);
          const double y = work(i, q);
          work(i, p) = c * x - s * y;
          work(i, q) = s * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v(i, p);
          const double y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
  }
  if (!converged)
    fail("ConvergenceFailure", "jacobi SVD did not converge in 60 sweeps");

  Vector sv(n, 0.0);
  Matrix u(m, n);
  double smax = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += work(i, j) * work(i, j);
    sv[j] = std::sqrt(s);
    smax = std::max(smax, sv[j]);
  }
  const double tiny = std::max(smax, 1.0) * 1e-300;
  for (std::size_t j = 0; j < n; ++j) {
    if (sv[j] > tiny) {
      for (std::size_t i = 0; i < m; ++i) u(i, j) = work(i, j) / sv[j];
    } else {
      // Null column: substitute a basis vector orthogonalized against the
      // columns already placed, so U keeps orthonormal columns.
      Vector cand(m, 0.0);
      for (std::size_t basis = 0; basis < m; ++basis) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[basis] = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == j) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += cand[i] * u(i, k);
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, k);
        }
        const double nn = norm2(cand);
        if (nn > 1e-8) {
          for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / nn;
          break;
        }
      }
      sv[j] = 0.0;
    }
  }

  // Sort singular values in descending order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sv[a] > sv[b]; });
  SvdResult out;
  out.s.resize(n);
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.s[j] = sv[src];
    for (std::size_t i = 0; i < m; ++i) out.u(i, j) = u(i, src);
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
  }
  return out;
}

}  // namespace detail

// Thin SVD: m = U diag(S) V^T with orthonormal columns in U and V.
inline SvdResult svd(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) fail("ShapeMismatch", "svd of empty matrix");
  if (!m.is_finite()) fail("NonFiniteValue", "svd input has non-finite entries");
  if (m.rows() >= m.cols()) return detail::jacobi_svd_tall(m);
  SvdResult t = detail::jacobi_svd_tall(transpose(m));
  std::swap(t.u, t.v);
  return t;
}

}  // namespace lalign
