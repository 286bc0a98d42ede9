#pragma once

#include <algorithm>
#include <cmath>

#include "lalign/core/matrix.hpp"

namespace lalign {

// Pairwise angles (degrees, in [0,180]) between all column pairs of w.
inline Vector column_pair_angles(const Matrix& w) {
  const std::size_t n = w.cols();
  if (n < 2) fail("ShapeMismatch", "need at least 2 columns for pair angles");
  Vector norms(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) s += w(i, j) * w(i, j);
    norms[j] = std::sqrt(s);
    if (norms[j] < 1e-12) fail("ZeroColumn", "column norm below 1e-12");
  }
  Vector angles;
  angles.reserve(n * (n - 1) / 2);
  for (std::size_t p = 0; p + 1 < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      double d = 0.0;
      for (std::size_t i = 0; i < w.rows(); ++i) d += w(i, p) * w(i, q);
      const double c = std::clamp(d / (norms[p] * norms[q]), -1.0, 1.0);
      angles.push_back(std::acos(c) * 180.0 / M_PI);
    }
  }
  return angles;
}

// Silverman's rule of thumb on an angle sample.
inline double silverman_bandwidth(const Vector& sample) {
  const double n = static_cast<double>(sample.size());
  if (sample.size() < 2) return 1.0;
  double mean = 0.0;
  for (double v : sample) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : sample) var += (v - mean) * (v - mean);
  var /= (n - 1);
  Vector sorted = sample;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double q) {
    const double pos = q * (n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::sqrt(var);
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  if (spread < 1e-9) spread = 1.0;
  return 1.06 * spread * std::pow(n, -0.2);
}

// Gaussian KDE of column-pair angles over a degree grid. Kernel mass is
// reflected at the 0 and 180 degree boundaries so the density integrates
// to 1 over [0,180].
inline Vector column_angle_kde(const Matrix& w, double bandwidth,
                               const Vector& grid_deg) {
  if (bandwidth <= 0.0) fail("InvalidSpec", "bandwidth must be positive");
  const Vector angles = column_pair_angles(w);
  const double h = bandwidth;
  const double norm = 1.0 / (static_cast<double>(angles.size()) * h *
                             std::sqrt(2.0 * M_PI));
  const auto kernel = [&](double z) { return std::exp(-0.5 * z * z); };
  Vector density(grid_deg.size(), 0.0);
  for (std::size_t g = 0; g < grid_deg.size(); ++g) {
    const double x = grid_deg[g];
    double s = 0.0;
    for (double a : angles) {
      s += kernel((x - a) / h);
      s += kernel((x + a) / h);            // reflection at 0
      s += kernel((x - (360.0 - a)) / h);  // reflection at 180
    }
    density[g] = norm * s;
  }
  return density;
}

}  // namespace lalign
