#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "lalign/core/matrix.hpp"

namespace lalign {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic engine for a (seed, stream) pair; streams decorrelate the
// independent random uses inside one command.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ stream));
}

inline Matrix random_normal(std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

inline Vector random_normal_vec(std::size_t n, std::mt19937_64& rng,
                                double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vector v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Random n x n orthogonal matrix via modified Gram-Schmidt on a Gaussian.
inline Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Matrix g = random_normal(n, n, rng);
  Matrix q(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Vector col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = g(i, j);
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += col[i] * q(i, k);
      for (std::size_t i = 0; i < n; ++i) col[i] -= proj * q(i, k);
    }
    double nn = norm2(col);
    if (nn < 1e-12) {
      // Degenerate draw; retry with a fresh column.
      for (std::size_t i = 0; i < n; ++i) col[i] = std::normal_distribution<double>()(rng);
      nn = norm2(col);
    }
    for (std::size_t i = 0; i < n; ++i) q(i, j) = col[i] / nn;
  }
  return q;
}

// Random square matrix with prescribed condition number: U diag(s) V^T with
// singular values log-spaced in [1/sqrt(c), sqrt(c)].
inline Matrix random_conditioned(std::size_t n, double condition,
                                 std::mt19937_64& rng) {
  Matrix u = random_orthogonal(n, rng);
  Matrix v = random_orthogonal(n, rng);
  const double lo = 1.0 / std::sqrt(condition);
  const double hi = std::sqrt(condition);
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (n == 1) ? 0.0 : static_cast<double>(i) / (n - 1);
    d(i, i) = lo * std::pow(hi / lo, t);
  }
  return matmul(matmul(u, d), transpose(v));
}

inline Matrix random_skew(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  Matrix p(n, n);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = dist(rng);
      p(i, j) = v;
      p(j, i) = -v;
    }
  }
  return p;
}

// Deterministic permutation of 0..n-1 from (seed, epoch).
inline std::vector<std::size_t> epoch_shuffle(std::size_t n, std::uint64_t seed,
                                              std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_engine(seed, splitmix64(0x51f0e57aULL + epoch));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace lalign
