#pragma once

#include <cmath>

#include "lalign/core/matrix.hpp"

namespace lalign {

namespace detail {

inline double one_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

}  // namespace detail

// Matrix exponential by scaling-and-squaring with a fixed [6/6] Pade
// approximant. The input is scaled until its 1-norm is <= 0.5.
inline Matrix expm(const Matrix& p) {
  if (p.rows() != p.cols()) fail("NonSquare", "expm needs a square matrix");
  const std::size_t n = p.rows();
  if (n == 0) return Matrix();

  int squarings = 0;
  double nrm = detail::one_norm(p);
  while (nrm > 0.5) {
    nrm *= 0.5;
    ++squarings;
  }
  Matrix a = p * std::ldexp(1.0, -squarings);

  // [6/6] Pade coefficients b_j = (12-j)! 6! / (12! j! (6-j)!)
  constexpr double b0 = 1.0;
  constexpr double b1 = 1.0 / 2.0;
  constexpr double b2 = 5.0 / 44.0;
  constexpr double b3 = 1.0 / 66.0;
  constexpr double b4 = 1.0 / 792.0;
  constexpr double b5 = 1.0 / 15840.0;
  constexpr double b6 = 1.0 / 665280.0;

  const Matrix a2 = matmul(a, a);
  const Matrix a4 = matmul(a2, a2);
  const Matrix a6 = matmul(a4, a2);
  const Matrix eye = Matrix::identity(n);

  Matrix even = b0 * eye + b2 * a2 + b4 * a4 + b6 * a6;
  Matrix odd = matmul(a, b1 * eye + b3 * a2 + b5 * a4);

  Matrix r = solve(even - odd, even + odd);
  for (int s = 0; s < squarings; ++s) r = matmul(r, r);
  return r;
}

// Directional (Frechet) derivative L(p,e) = d/dt exp(p + t e) at t=0,
// read off as the upper-right block of exp([[p, e], [0, p]]).
inline Matrix expm_frechet(const Matrix& p, const Matrix& e) {
  if (p.rows() != p.cols()) fail("NonSquare", "expm_frechet needs square p");
  if (e.rows() != e.cols()) fail("NonSquare", "expm_frechet needs square e");
  if (p.rows() != e.rows()) fail("ShapeMismatch", "expm_frechet shape mismatch");
  const std::size_t n = p.rows();
  Matrix block(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      block(i, j) = p(i, j);
      block(i, n + j) = e(i, j);
      block(n + i, n + j) = p(i, j);
    }
  }
  const Matrix big = expm(block);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = big(i, n + j);
  return out;
}

}  // namespace lalign
