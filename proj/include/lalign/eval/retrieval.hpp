#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <thread>

#include "lalign/io/bundle.hpp"

namespace lalign {

enum class DistanceKind { l2, cosine };

inline std::string to_string(DistanceKind d) {
  return d == DistanceKind::l2 ? "l2" : "cosine";
}

inline DistanceKind distance_from_string(const std::string& s) {
  if (s == "l2") return DistanceKind::l2;
  if (s == "cosine") return DistanceKind::cosine;
  fail("InvalidSpec", "unknown distance kind: " + s);
}

namespace detail {

inline double pair_distance(std::span<const double> a, std::span<const double> b,
                            DistanceKind kind) {
  if (kind == DistanceKind::l2) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  const double na = std::max(norm2(a), 1e-12);
  const double nb = std::max(norm2(b), 1e-12);
  return 1.0 - dot(a, b) / (na * nb);
}

// Gallery indices sorted by (distance, index); self excluded in
// leave-one-out mode.
inline std::vector<std::size_t> ranked_gallery(const EmbeddingSet& query,
                                               const EmbeddingSet& gallery,
                                               std::size_t qi, DistanceKind kind,
                                               bool leave_one_out) {
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(gallery.count);
  for (std::size_t gi = 0; gi < gallery.count; ++gi) {
    if (leave_one_out && gi == qi) continue;
    ranked.emplace_back(
        pair_distance(query.vectors.row(qi), gallery.vectors.row(gi), kind), gi);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> order;
  order.reserve(ranked.size());
  for (const auto& [d, gi] : ranked) order.push_back(gi);
  return order;
}

struct PerQuery {
  bool hit_at_k = false;
  double average_precision = 0.0;
  bool has_relevant = false;
};

template <typename Fn>
inline void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(threads, 1);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline void check_eval_inputs(const EmbeddingSet& query,
                              const EmbeddingSet& gallery, bool leave_one_out) {
  query.validate();
  gallery.validate();
  if (!query.has_labels() || !gallery.has_labels())
    fail("MissingLabels", "retrieval evaluation needs labels on both sides");
  if (query.dim != gallery.dim)
    fail("DimMismatch", "query/gallery dims differ");
  if (gallery.count == 0 || (leave_one_out && gallery.count < 2))
    fail("EmptyGallery", "gallery too small");
  if (leave_one_out && query.count != gallery.count)
    fail("Misaligned", "leave-one-out expects query == gallery set");
}

inline std::vector<PerQuery> evaluate_queries(const EmbeddingSet& query,
                                              const EmbeddingSet& gallery,
                                              std::size_t k, DistanceKind kind,
                                              bool leave_one_out,
                                              std::size_t threads) {
  std::vector<PerQuery> results(query.count);
  parallel_for(query.count, threads, [&](std::size_t qi) {
    const auto order = ranked_gallery(query, gallery, qi, kind, leave_one_out);
    PerQuery r;
    const long label = query.labels[qi];
    std::size_t relevant_seen = 0;
    double ap_sum = 0.0;
    std::size_t total_relevant = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      const bool rel = gallery.labels[order[rank]] == label;
      if (rel) {
        ++total_relevant;
        ++relevant_seen;
        ap_sum += static_cast<double>(relevant_seen) /
                  static_cast<double>(rank + 1);
        if (rank < k) r.hit_at_k = true;
      }
    }
    r.has_relevant = total_relevant > 0;
    r.average_precision =
        r.has_relevant ? ap_sum / static_cast<double>(total_relevant) : 0.0;
    results[qi] = r;
  });
  return results;
}

}  // namespace detail

// Fraction of queries whose k nearest gallery items include at least one
// same-label item. Ties broken by (distance, gallery index ascending).
inline double cmc(const EmbeddingSet& query, const EmbeddingSet& gallery,
                  std::size_t k, DistanceKind kind = DistanceKind::l2,
                  bool leave_one_out = false, std::size_t threads = 1) {
  detail::check_eval_inputs(query, gallery, leave_one_out);
  const auto res =
      detail::evaluate_queries(query, gallery, k, kind, leave_one_out, threads);
  std::size_t hits = 0;
  for (const auto& r : res) hits += r.hit_at_k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(res.size());
}

// Mean over queries of average precision across relevant ranks. Queries with
// zero relevant gallery items are excluded and counted separately.
inline double mean_average_precision(const EmbeddingSet& query,
                                     const EmbeddingSet& gallery,
                                     DistanceKind kind = DistanceKind::l2,
                                     bool leave_one_out = false,
                                     std::size_t* excluded_queries = nullptr,
                                     std::size_t threads = 1) {
  detail::check_eval_inputs(query, gallery, leave_one_out);
  const auto res =
      detail::evaluate_queries(query, gallery, 1, kind, leave_one_out, threads);
  double ap = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
  for (const auto& r : res) {
    if (r.has_relevant) {
      ap += r.average_precision;
      ++used;
    } else {
      ++excluded;
    }
  }
  if (excluded_queries) *excluded_queries = excluded;
  if (used == 0) fail("EmptyGallery", "no query has a relevant gallery item");
  return ap / static_cast<double>(used);
}

struct RetrievalReport {
  std::map<std::size_t, double> cmc_top_k;
  double map_score = 0.0;
  std::size_t excluded_queries = 0;
  std::string query_tag;
  std::string gallery_tag;
};

inline RetrievalReport evaluate_retrieval(
    const EmbeddingSet& query, const EmbeddingSet& gallery,
    const std::vector<std::size_t>& ks, DistanceKind kind = DistanceKind::l2,
    bool leave_one_out = false, std::size_t threads = 1) {
  RetrievalReport report;
  report.query_tag = query.model_tag;
  report.gallery_tag = gallery.model_tag;
  for (std::size_t k : ks)
    report.cmc_top_k[k] = cmc(query, gallery, k, kind, leave_one_out, threads);
  report.map_score = mean_average_precision(query, gallery, kind, leave_one_out,
                                            &report.excluded_queries, threads);
  return report;
}

// Pairwise check of the two backward-compatibility inequalities over all
// ordered pairs i != j with Euclidean distance:
//   same label:  d(old_i, new_j) <= d(old_i, old_j)
//   diff label:  d(old_i, new_j) >= d(new_i, new_j)
struct Def1Report {
  std::size_t same_pairs = 0;
  std::size_t diff_pairs = 0;
  std::size_t same_violations = 0;
  std::size_t diff_violations = 0;

  double same_violation_fraction() const {
    return same_pairs ? static_cast<double>(same_violations) / same_pairs : 0.0;
  }
  double diff_violation_fraction() const {
    return diff_pairs ? static_cast<double>(diff_violations) / diff_pairs : 0.0;
  }
};

inline Def1Report check_definition1(const EmbeddingSet& old_set,
                                    const EmbeddingSet& new_set) {
  old_set.validate();
  new_set.validate();
  if (!old_set.has_labels()) fail("MissingLabels", "definition check needs labels");
  if (old_set.count != new_set.count || old_set.dim != new_set.dim)
    fail("Misaligned", "definition check needs row-aligned equal-dim sets");
  if (old_set.count > 2000)
    fail("TooLarge", "pairwise check capped at 2000 samples");
  constexpr double kTol = 1e-12;
  Def1Report rep;
  for (std::size_t i = 0; i < old_set.count; ++i) {
    for (std::size_t j = 0; j < old_set.count; ++j) {
      if (i == j) continue;
      const double cross = detail::pair_distance(
          old_set.vectors.row(i), new_set.vectors.row(j), DistanceKind::l2);
      if (old_set.labels[i] == old_set.labels[j]) {
        const double within_old = detail::pair_distance(
            old_set.vectors.row(i), old_set.vectors.row(j), DistanceKind::l2);
        ++rep.same_pairs;
        if (cross > within_old + kTol) ++rep.same_violations;
      } else {
        const double within_new = detail::pair_distance(
            new_set.vectors.row(i), new_set.vectors.row(j), DistanceKind::l2);
        ++rep.diff_pairs;
        if (cross < within_new - kTol) ++rep.diff_violations;
      }
    }
  }
  return rep;
}

// Empirical compatibility criterion: strict improvement of cross-model
// retrieval over old/old self-retrieval, per metric.
struct CompatibilityVerdict {
  RetrievalReport cross_model;
  RetrievalReport self_old;
  bool satisfied_cmc_top1 = false;
  bool satisfied_map = false;
};

inline CompatibilityVerdict compatibility_verdict(
    const EmbeddingSet& query_new, const EmbeddingSet& gallery_old,
    const EmbeddingSet& query_old, DistanceKind kind = DistanceKind::l2,
    bool leave_one_out = false, std::size_t threads = 1) {
  CompatibilityVerdict v;
  v.cross_model = evaluate_retrieval(query_new, gallery_old, {1}, kind,
                                     leave_one_out, threads);
  v.self_old = evaluate_retrieval(query_old, gallery_old, {1}, kind,
                                  leave_one_out, threads);
  v.satisfied_cmc_top1 = v.cross_model.cmc_top_k.at(1) > v.self_old.cmc_top_k.at(1);
  v.satisfied_map = v.cross_model.map_score > v.self_old.map_score;
  return v;
}

}  // namespace lalign
