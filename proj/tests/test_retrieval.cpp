#include <catch2/catch_amalgamated.hpp>

#include "lalign/eval/retrieval.hpp"
#include "lalign/io/synth.hpp"

using namespace lalign;

namespace {

EmbeddingSet make_set(std::vector<Vector> rows, std::vector<long> labels) {
  EmbeddingSet set;
  set.count = rows.size();
  set.dim = rows[0].size();
  set.vectors = Matrix(set.count, set.dim);
  for (std::size_t i = 0; i < set.count; ++i) set.vectors.set_row(i, rows[i]);
  set.labels = std::move(labels);
  set.model_tag = "test";
  return set;
}

EmbeddingSet random_labeled_set(std::size_t classes, std::size_t per_class,
                                std::size_t dim, std::mt19937_64& rng) {
  EmbeddingSet set;
  set.count = classes * per_class;
  set.dim = dim;
  set.vectors = random_normal(set.count, dim, rng);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t s = 0; s < per_class; ++s)
      set.labels.push_back(static_cast<long>(c));
  set.model_tag = "rand";
  return set;
}

// Rank-counting oracle: the rank of gallery item g for query q is the number
// of gallery items strictly closer, plus those at equal distance with a
// smaller index. Independent of any sort.
struct OracleResult {
  double cmc_at_k;
  double map;
};

OracleResult oracle_eval(const EmbeddingSet& query, const EmbeddingSet& gallery,
                         std::size_t k, DistanceKind kind, bool loo) {
  std::size_t hits = 0;
  double ap_total = 0.0;
  std::size_t used = 0;
  for (std::size_t qi = 0; qi < query.count; ++qi) {
    std::vector<double> dist(gallery.count);
    for (std::size_t gi = 0; gi < gallery.count; ++gi)
      dist[gi] =
          detail::pair_distance(query.vectors.row(qi), gallery.vectors.row(gi), kind);
    const auto rank_of = [&](std::size_t gi) {
      std::size_t r = 0;
      for (std::size_t other = 0; other < gallery.count; ++other) {
        if (other == gi || (loo && other == qi)) continue;
        if (dist[other] < dist[gi] || (dist[other] == dist[gi] && other < gi)) ++r;
      }
      return r;
    };
    bool hit = false;
    std::vector<std::size_t> rel_ranks;
    for (std::size_t gi = 0; gi < gallery.count; ++gi) {
      if (loo && gi == qi) continue;
      if (gallery.labels[gi] != query.labels[qi]) continue;
      const std::size_t r = rank_of(gi);
      rel_ranks.push_back(r);
      if (r < k) hit = true;
    }
    if (hit) ++hits;
    if (!rel_ranks.empty()) {
      std::sort(rel_ranks.begin(), rel_ranks.end());
      double ap = 0.0;
      for (std::size_t i = 0; i < rel_ranks.size(); ++i)
        ap += static_cast<double>(i + 1) / static_cast<double>(rel_ranks[i] + 1);
      ap_total += ap / static_cast<double>(rel_ranks.size());
      ++used;
    }
  }
  return {static_cast<double>(hits) / query.count, ap_total / used};
}

}  // namespace

TEST_CASE("cmc hand cases") {
  // Query at origin; nearest gallery item has the wrong label, second has
  // the right one: top-1 misses, top-2 hits.
  const EmbeddingSet query = make_set({{0.0, 0.0}}, {7});
  const EmbeddingSet gallery =
      make_set({{1.0, 0.0}, {2.0, 0.0}, {5.0, 0.0}}, {1, 7, 7});
  CHECK(cmc(query, gallery, 1) == 0.0);
  CHECK(cmc(query, gallery, 2) == 1.0);
  CHECK(cmc(query, gallery, 3) == 1.0);
}

TEST_CASE("average precision hand case") {
  // Ranked gallery pattern relevant / non / relevant -> AP = (1 + 2/3)/2.
  const EmbeddingSet query = make_set({{0.0, 0.0}}, {7});
  const EmbeddingSet gallery =
      make_set({{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}}, {7, 1, 7});
  CHECK(mean_average_precision(query, gallery) ==
        Catch::Approx(0.5 * (1.0 + 2.0 / 3.0)));
  CHECK(mean_average_precision(query, gallery) == Catch::Approx(5.0 / 6.0));
}

TEST_CASE("ties break by ascending gallery index") {
  // Two gallery items at the same distance; the smaller index wins rank 0.
  const EmbeddingSet query = make_set({{0.0, 0.0}}, {1});
  const EmbeddingSet wrong_first =
      make_set({{1.0, 0.0}, {-1.0, 0.0}}, {0, 1});
  const EmbeddingSet right_first =
      make_set({{1.0, 0.0}, {-1.0, 0.0}}, {1, 0});
  CHECK(cmc(query, wrong_first, 1) == 0.0);
  CHECK(cmc(query, right_first, 1) == 1.0);
}

TEST_CASE("leave-one-out excludes the self index") {
  // Two identical same-label points hit each other under leave-one-out; the
  // singleton-label point has no relevant item left and misses: CMC = 2/3.
  const EmbeddingSet set =
      make_set({{0.0, 0.0}, {0.0, 0.0}, {9.0, 9.0}}, {4, 4, 5});
  CHECK(cmc(set, set, 1, DistanceKind::l2, true) == Catch::Approx(2.0 / 3.0));
  // self-retrieval without leave-one-out is trivially perfect
  CHECK(cmc(set, set, 1, DistanceKind::l2, false) == 1.0);
}

TEST_CASE("queries without relevant items are excluded from mAP") {
  const EmbeddingSet query = make_set({{0.0, 0.0}, {1.0, 1.0}}, {1, 9});
  const EmbeddingSet gallery = make_set({{0.5, 0.0}, {2.0, 0.0}}, {1, 1});
  std::size_t excluded = 0;
  const double m = mean_average_precision(query, gallery, DistanceKind::l2,
                                          false, &excluded);
  CHECK(excluded == 1);
  CHECK(m == Catch::Approx(1.0));

  const EmbeddingSet hopeless = make_set({{0.0, 0.0}}, {42});
  try {
    mean_average_precision(hopeless, gallery);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == "EmptyGallery");
  }
}

TEST_CASE("metrics match the rank-counting oracle on 100 random instances") {
  auto rng = make_engine(91);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + trial % 4;
    const std::size_t per_class = 2 + (trial / 4) % 4;
    const std::size_t dim = 2 + trial % 3;
    const EmbeddingSet gallery = random_labeled_set(classes, per_class, dim, rng);
    const EmbeddingSet query = random_labeled_set(classes, 2, dim, rng);
    const DistanceKind kind =
        (trial % 2 == 0) ? DistanceKind::l2 : DistanceKind::cosine;
    const std::size_t k = 1 + trial % 3;
    const OracleResult expect = oracle_eval(query, gallery, k, kind, false);
    CHECK(std::abs(cmc(query, gallery, k, kind) - expect.cmc_at_k) <= 1e-12);
    CHECK(std::abs(mean_average_precision(query, gallery, kind) - expect.map) <=
          1e-12);
  }
}

TEST_CASE("leave-one-out metrics match the oracle") {
  auto rng = make_engine(92);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingSet set = random_labeled_set(3, 4, 3, rng);
    const OracleResult expect = oracle_eval(set, set, 1, DistanceKind::l2, true);
    CHECK(std::abs(cmc(set, set, 1, DistanceKind::l2, true) - expect.cmc_at_k) <=
          1e-12);
    CHECK(std::abs(mean_average_precision(set, set, DistanceKind::l2, true) -
                   expect.map) <= 1e-12);
  }
}

TEST_CASE("cmc is monotone in k") {
  auto rng = make_engine(93);
  const EmbeddingSet gallery = random_labeled_set(4, 5, 4, rng);
  const EmbeddingSet query = random_labeled_set(4, 3, 4, rng);
  double prev = 0.0;
  for (std::size_t k = 1; k <= gallery.count; ++k) {
    const double c = cmc(query, gallery, k);
    CHECK(c >= prev - 1e-15);
    prev = c;
  }
  CHECK(prev == 1.0);  // every query has a same-label gallery item
}

TEST_CASE("metrics are invariant to an isometry of both sets") {
  auto rng = make_engine(94);
  const EmbeddingSet gallery = random_labeled_set(3, 4, 5, rng);
  const EmbeddingSet query = random_labeled_set(3, 2, 5, rng);
  const Matrix r = random_orthogonal(5, rng);
  EmbeddingSet gallery_rot = gallery;
  EmbeddingSet query_rot = query;
  gallery_rot.vectors = matmul(gallery.vectors, r);
  query_rot.vectors = matmul(query.vectors, r);
  CHECK(cmc(query, gallery, 1) == cmc(query_rot, gallery_rot, 1));
  CHECK(mean_average_precision(query, gallery) ==
        Catch::Approx(mean_average_precision(query_rot, gallery_rot))
            .epsilon(1e-12));
}

TEST_CASE("metric results do not depend on the thread count") {
  auto rng = make_engine(95);
  const EmbeddingSet gallery = random_labeled_set(4, 6, 4, rng);
  const EmbeddingSet query = random_labeled_set(4, 4, 4, rng);
  const double c1 = cmc(query, gallery, 1, DistanceKind::l2, false, 1);
  const double c4 = cmc(query, gallery, 1, DistanceKind::l2, false, 4);
  CHECK(c1 == c4);
  const double m1 =
      mean_average_precision(query, gallery, DistanceKind::l2, false, nullptr, 1);
  const double m4 =
      mean_average_precision(query, gallery, DistanceKind::l2, false, nullptr, 4);
  CHECK(m1 == m4);
}

TEST_CASE("evaluate_retrieval bundles cmc curve and map") {
  auto rng = make_engine(96);
  const EmbeddingSet gallery = random_labeled_set(3, 4, 3, rng);
  const EmbeddingSet query = random_labeled_set(3, 2, 3, rng);
  const RetrievalReport rep = evaluate_retrieval(query, gallery, {1, 5, 10});
  REQUIRE(rep.cmc_top_k.size() == 3);
  CHECK(rep.cmc_top_k.at(1) == cmc(query, gallery, 1));
  CHECK(rep.cmc_top_k.at(1) <= rep.cmc_top_k.at(5));
  CHECK(rep.cmc_top_k.at(5) <= rep.cmc_top_k.at(10));
  CHECK(rep.map_score == Catch::Approx(mean_average_precision(query, gallery)));
}

TEST_CASE("compatibility definition check counts ordered-pair violations") {
  SECTION("identical sets never violate") {
    auto rng = make_engine(97);
    SynthSpec spec;
    spec.num_classes = 3;
    spec.per_class = 4;
    spec.seed = 12;
    const PairedEmbeddings pair = synth_pair(spec);
    const Def1Report rep = check_definition1(pair.old_set, pair.old_set);
    CHECK(rep.same_violations == 0);
    CHECK(rep.diff_violations == 0);
    CHECK(rep.same_pairs + rep.diff_pairs == 12 * 11);
  }
  SECTION("hand-built violation") {
    // new_1 drifts away from old_0 while staying its same-label partner:
    // d(old_0, new_1) > d(old_0, old_1) violates the same-label inequality.
    const EmbeddingSet old_set = make_set({{0.0, 0.0}, {1.0, 0.0}}, {3, 3});
    const EmbeddingSet new_set = make_set({{0.0, 0.0}, {4.0, 0.0}}, {3, 3});
    const Def1Report rep = check_definition1(old_set, new_set);
    CHECK(rep.same_pairs == 2);
    CHECK(rep.same_violations == 1);
  }
  SECTION("cap on the pairwise size") {
    EmbeddingSet big;
    big.count = 2001;
    big.dim = 2;
    big.vectors = Matrix(2001, 2, 1.0);
    big.labels.assign(2001, 0);
    try {
      check_definition1(big, big);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == "TooLarge");
    }
  }
}

TEST_CASE("compatibility verdict requires strict improvement") {
  auto rng = make_engine(98);
  const EmbeddingSet old_set = random_labeled_set(3, 4, 4, rng);
  // identical cross set: metrics tie, strict comparison fails
  const CompatibilityVerdict tie =
      compatibility_verdict(old_set, old_set, old_set, DistanceKind::l2, true);
  CHECK_FALSE(tie.satisfied_cmc_top1);
  CHECK_FALSE(tie.satisfied_map);
}

TEST_CASE("retrieval input validation") {
  auto rng = make_engine(99);
  EmbeddingSet labeled = random_labeled_set(2, 3, 3, rng);
  EmbeddingSet unlabeled = labeled;
  unlabeled.labels.clear();
  try {
    cmc(unlabeled, labeled, 1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == "MissingLabels");
  }
  EmbeddingSet other_dim = random_labeled_set(2, 3, 4, rng);
  try {
    cmc(labeled, other_dim, 1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == "DimMismatch");
  }
}
