#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "lalign/core/rng.hpp"
#include "lalign/io/bundle.hpp"

namespace lalign {

enum class Distortion { orthogonal, affine, affine_noise };

inline std::string to_string(Distortion d) {
  switch (d) {
    case Distortion::orthogonal: return "orthogonal";
    case Distortion::affine: return "affine";
    case Distortion::affine_noise: return "affine+noise";
  }
  return "?";
}

inline Distortion distortion_from_string(const std::string& s) {
  if (s == "orthogonal") return Distortion::orthogonal;
  if (s == "affine") return Distortion::affine;
  if (s == "affine+noise" || s == "affine_noise") return Distortion::affine_noise;
  fail("InvalidSpec", "unknown distortion kind: " + s);
}

// Desk-scale synthetic stand-in for paired old/new embedding sets. The old
// space is Gaussian class blobs; the new space is the old space pushed
// through a distortion, optionally with tighter class spread to model an
// improved model.
struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 20;
  std::size_t dim_old = 8;
  std::size_t dim_new = 8;
  double class_spread = 1.0;
  Vector per_class_spread;  // optional; overrides class_spread when nonempty
  double inter_class_separation = 6.0;
  Distortion distortion = Distortion::orthogonal;
  double noise_scale = 0.0;        // used by affine+noise
  double affine_condition = 5.0;   // used by affine kinds
  double new_spread_factor = 1.0;  // < 1 models an improved new model
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) fail("InvalidSpec", "num_classes must be >= 2");
    if (per_class < 2) fail("InvalidSpec", "per_class must be >= 2");
    if (dim_old < 2 || dim_new < 2) fail("InvalidSpec", "dims must be >= 2");
    if (class_spread <= 0.0) fail("InvalidSpec", "class_spread must be > 0");
    if (inter_class_separation <= 0.0)
      fail("InvalidSpec", "inter_class_separation must be > 0");
    if (!per_class_spread.empty()) {
      if (per_class_spread.size() != num_classes)
        fail("InvalidSpec", "per_class_spread length must equal num_classes");
      for (double s : per_class_spread)
        if (s <= 0.0) fail("InvalidSpec", "per-class spread must be > 0");
    }
    if (noise_scale < 0.0) fail("InvalidSpec", "noise_scale must be >= 0");
    if (affine_condition < 1.0) fail("InvalidSpec", "affine_condition must be >= 1");
    if (new_spread_factor <= 0.0) fail("InvalidSpec", "new_spread_factor must be > 0");
  }

  double spread_of(std::size_t c) const {
    return per_class_spread.empty() ? class_spread : per_class_spread[c];
  }
};

namespace detail {

inline int det_sign(Matrix a) {
  int sign = 1;
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) return 0;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      sign = -sign;
    }
    if (a(k, k) < 0.0) sign = -sign;
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return sign;
}

// rows x cols matrix with orthonormal columns (rows >= cols) or orthonormal
// rows (rows < cols); an isometry when rows >= cols. The square case is a
// proper rotation (det +1), which keeps it invertible by the strictly
// orthogonal exp-parameterized map.
inline Matrix semi_orthogonal(std::size_t rows, std::size_t cols,
                              std::mt19937_64& rng) {
  const std::size_t big = std::max(rows, cols);
  Matrix q = random_orthogonal(big, rng);
  if (rows == cols && det_sign(q) < 0)
    for (std::size_t i = 0; i < big; ++i) q(i, big - 1) = -q(i, big - 1);
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = q(i, j);
  return out;
}

inline Matrix distortion_matrix(const SynthSpec& spec, std::mt19937_64& rng) {
  const std::size_t d = spec.dim_old;
  const std::size_t n = spec.dim_new;
  if (spec.distortion == Distortion::orthogonal) return semi_orthogonal(n, d, rng);
  const std::size_t k = std::min(d, n);
  Matrix left = semi_orthogonal(n, k, rng);
  Matrix right = semi_orthogonal(k, d, rng);
  const double lo = 1.0 / std::sqrt(spec.affine_condition);
  const double hi = std::sqrt(spec.affine_condition);
  Matrix diag(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    const double t = (k == 1) ? 0.0 : static_cast<double>(i) / (k - 1);
    diag(i, i) = lo * std::pow(hi / lo, t);
  }
  return matmul(matmul(left, diag), right);
}

}  // namespace detail

inline PairedEmbeddings synth_pair(const SynthSpec& spec) {
  spec.validate();
  auto mean_rng = make_engine(spec.seed, 1);
  auto sample_rng = make_engine(spec.seed, 2);
  auto map_rng = make_engine(spec.seed, 3);
  auto noise_rng = make_engine(spec.seed, 4);

  const std::size_t d = spec.dim_old;
  const std::size_t n = spec.dim_new;
  const std::size_t count = spec.num_classes * spec.per_class;

  // Class means: random Gaussian directions rescaled so the minimum pairwise
  // separation matches the request.
  Matrix means = random_normal(spec.num_classes, d, mean_rng);
  double min_sep = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a + 1 < spec.num_classes; ++a) {
    for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = means(a, j) - means(b, j);
        s += diff * diff;
      }
      min_sep = std::min(min_sep, std::sqrt(s));
    }
  }
  if (min_sep < 1e-9) fail("InvalidSpec", "degenerate class mean draw");
  means *= spec.inter_class_separation / min_sep;

  const Matrix dmat = detail::distortion_matrix(spec, map_rng);

  EmbeddingSet old_set;
  old_set.dim = d;
  old_set.count = count;
  old_set.vectors = Matrix(count, d);
  old_set.model_tag = "synth-old";
  EmbeddingSet new_set;
  new_set.dim = n;
  new_set.count = count;
  new_set.vectors = Matrix(count, n);
  new_set.model_tag = "synth-new";

  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const double spread = spec.spread_of(c);
    for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
      const Vector z = random_normal_vec(d, sample_rng);
      Vector old_v(d), pre_new(d);
      for (std::size_t j = 0; j < d; ++j) {
        old_v[j] = means(c, j) + spread * z[j];
        pre_new[j] = means(c, j) + spec.new_spread_factor * spread * z[j];
      }
      old_set.vectors.set_row(row, old_v);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += dmat(i, j) * pre_new[j];
        new_set.vectors(row, i) = acc;
      }
      old_set.labels.push_back(static_cast<long>(c));
      new_set.labels.push_back(static_cast<long>(c));
    }
  }
  if (spec.distortion == Distortion::affine_noise && spec.noise_scale > 0.0) {
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < n; ++j)
        new_set.vectors(i, j) +=
            spec.noise_scale * std::normal_distribution<double>()(noise_rng);
  }

  PairedEmbeddings pair{std::move(old_set), std::move(new_set)};
  pair.validate();
  return pair;
}

// Leave-one-out evaluation bookkeeping: each sample is a query exactly once
// against a gallery excluding itself. Index lists, not a physical split.
struct GalleryQuerySplit {
  std::vector<std::size_t> query_order;  // order in which queries are visited
  bool leave_one_out = true;
};

inline GalleryQuerySplit split_gallery_query(const EmbeddingSet& set,
                                             std::uint64_t seed) {
  set.validate();
  if (!set.has_labels()) fail("MissingLabels", "split needs labels");
  std::map<long, std::size_t> counts;
  for (long y : set.labels) ++counts[y];
  for (const auto& [label, c] : counts)
    if (c < 2)
      fail("SingletonClass",
           "class " + std::to_string(label) + " has a single sample");
  GalleryQuerySplit split;
  split.query_order = epoch_shuffle(set.count, seed, 0);
  return split;
}

}  // namespace lalign
