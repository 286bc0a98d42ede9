#pragma once

#include <algorithm>
#include <map>
#include <numeric>

#include "lalign/core/rng.hpp"
#include "lalign/eval/retrieval.hpp"

namespace lalign {

struct BackfillOrdering {
  std::string kind;                 // ours_mse | ours_cosine | random
  std::vector<std::size_t> order;   // permutation over gallery indices
  std::uint64_t seed = 0;           // random kind only
};

// Farthest-from-class-mean first: computes the class mean over the adapted
// gallery vectors, then sorts indices by descending distance to the mean
// (ties by ascending index).
inline BackfillOrdering order_by_class_mean_distance(
    const EmbeddingSet& gallery_adapted, DistanceKind kind = DistanceKind::l2) {
  gallery_adapted.validate();
  if (!gallery_adapted.has_labels())
    fail("MissingLabels", "backfill ordering needs labels");
  const std::size_t dim = gallery_adapted.dim;
  std::map<long, std::pair<Vector, std::size_t>> accum;
  for (std::size_t i = 0; i < gallery_adapted.count; ++i) {
    auto& [sum, n] = accum[gallery_adapted.labels[i]];
    if (sum.empty()) sum.assign(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) sum[j] += gallery_adapted.vectors(i, j);
    ++n;
  }
  for (auto& [label, entry] : accum)
    for (double& v : entry.first) v /= static_cast<double>(entry.second);

  std::vector<std::pair<double, std::size_t>> keyed(gallery_adapted.count);
  for (std::size_t i = 0; i < gallery_adapted.count; ++i) {
    const Vector& mean = accum[gallery_adapted.labels[i]].first;
    keyed[i] = {detail::pair_distance(gallery_adapted.vectors.row(i), mean, kind),
                i};
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;  // farthest first
    return a.second < b.second;
  });
  BackfillOrdering out;
  out.kind = kind == DistanceKind::l2 ? "ours_mse" : "ours_cosine";
  out.order.reserve(keyed.size());
  for (const auto& [d, i] : keyed) out.order.push_back(i);
  return out;
}

inline BackfillOrdering random_ordering(std::size_t n, std::uint64_t seed) {
  BackfillOrdering out;
  out.kind = "random";
  out.seed = seed;
  out.order = epoch_shuffle(n, seed, 0);
  return out;
}

// Hybrid gallery at fraction beta: the first floor(beta*N) positions of the
// ordering come from the new-adapted set, the rest from the old-adapted set.
inline EmbeddingSet hybrid_gallery(const EmbeddingSet& old_adapted,
                                   const EmbeddingSet& new_adapted,
                                   const BackfillOrdering& ordering,
                                   double beta) {
  old_adapted.validate();
  new_adapted.validate();
  if (old_adapted.count != new_adapted.count ||
      old_adapted.dim != new_adapted.dim ||
      old_adapted.labels != new_adapted.labels)
    fail("Misaligned", "hybrid gallery needs row-aligned adapted sets");
  if (ordering.order.size() != old_adapted.count)
    fail("Misaligned", "ordering length does not match gallery");
  if (beta < 0.0 || beta > 1.0) fail("InvalidSpec", "beta must lie in [0,1]");

  std::vector<bool> is_perm(old_adapted.count, false);
  for (std::size_t i : ordering.order) {
    if (i >= old_adapted.count || is_perm[i])
      fail("Misaligned", "ordering is not a permutation");
    is_perm[i] = true;
  }

  EmbeddingSet out = old_adapted;
  out.model_tag = "hybrid";
  const std::size_t replaced =
      static_cast<std::size_t>(std::floor(beta * old_adapted.count));
  for (std::size_t r = 0; r < replaced; ++r) {
    const std::size_t idx = ordering.order[r];
    out.vectors.set_row(idx, new_adapted.vectors.row(idx));
  }
  return out;
}

struct BackfillCurve {
  Vector beta_grid;
  Vector cmc_top1;
  Vector map_score;
  double m_tilde_cmc = 0.0;
  double m_tilde_map = 0.0;
  std::string ordering_kind;
};

inline double trapezoid(const Vector& x, const Vector& y) {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    area += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  // Expectation over beta ~ U[0,1]; the grid spans [0,1] so the area is
  // already the mean.
  return area;
}

inline Vector default_beta_grid() {
  Vector g(11);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.1 * static_cast<double>(i);
  g.back() = 1.0;
  return g;
}

inline BackfillCurve backfill_curve(const EmbeddingSet& query,
                                    const EmbeddingSet& old_adapted,
                                    const EmbeddingSet& new_adapted,
                                    const BackfillOrdering& ordering,
                                    const Vector& beta_grid,
                                    DistanceKind kind = DistanceKind::l2,
                                    bool leave_one_out = false,
                                    std::size_t threads = 1) {
  if (beta_grid.size() < 2 || beta_grid.front() != 0.0 || beta_grid.back() != 1.0)
    fail("InvalidSpec", "beta grid must ascend from 0 to 1");
  for (std::size_t i = 0; i + 1 < beta_grid.size(); ++i)
    if (beta_grid[i] >= beta_grid[i + 1])
      fail("InvalidSpec", "beta grid must be strictly ascending");
  BackfillCurve curve;
  curve.beta_grid = beta_grid;
  curve.ordering_kind = ordering.kind;
  for (double beta : beta_grid) {
    const EmbeddingSet gallery =
        hybrid_gallery(old_adapted, new_adapted, ordering, beta);
    curve.cmc_top1.push_back(cmc(query, gallery, 1, kind, leave_one_out, threads));
    curve.map_score.push_back(mean_average_precision(query, gallery, kind,
                                                     leave_one_out, nullptr,
                                                     threads));
  }
  curve.m_tilde_cmc = trapezoid(beta_grid, curve.cmc_top1);
  curve.m_tilde_map = trapezoid(beta_grid, curve.map_score);
  return curve;
}

}  // namespace lalign
