#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lalign/maps/maps.hpp"

namespace lalign {

struct LossWeights {
  double w_forward = 1.0;      // w1
  double w_backward = 1.0;     // w2
  double w_contrastive = 1.0;  // w3
  double lambda = 0.0;         // orthogonality threshold
  double alpha = 10.0;         // sigmoid steepness
  double temperature = 0.1;    // contrastive softmax temperature

  void validate() const {
    if (w_forward < 0 || w_backward < 0 || w_contrastive < 0)
      fail("InvalidSpec", "loss weights must be nonnegative");
    if (lambda < 0) fail("InvalidSpec", "lambda must be nonnegative");
    if (alpha <= 0) fail("InvalidSpec", "alpha must be positive");
    if (temperature <= 0) fail("InvalidSpec", "temperature must be positive");
  }
};

struct LossBreakdown {
  double total = 0.0;
  double l_f = 0.0;
  double l_b = 0.0;
  double l_c = 0.0;
  double l_lambda = 0.0;
};

// Mean over the batch of ||B(h_new_i) - h_old_i||^2; gradients accumulate
// into B's parameter gradient.
inline double loss_backward_mse(const Map& backward, const Matrix& h_new,
                                const Matrix& h_old,
                                std::span<double> grad_backward) {
  if (h_new.rows() != h_old.rows()) fail("DimMismatch", "batch rows differ");
  if (h_old.cols() != backward.out_dim())
    fail("DimMismatch", "backward target dim mismatch");
  const Matrix pred = backward.apply(h_new);
  const double inv_n = 1.0 / static_cast<double>(h_new.rows());
  Matrix diff = pred - h_old;
  double value = 0.0;
  for (double v : diff.data()) value += v * v;
  value *= inv_n;
  if (!grad_backward.empty()) {
    Matrix g = diff * (2.0 * inv_n);
    backward.backprop(h_new, g, grad_backward, nullptr);
  }
  return value;
}

// ||W^T W - I||_F with zero-safe gradient at the orthogonal optimum.
inline double loss_orth(const Matrix& w, Matrix* grad = nullptr) {
  const Matrix gram = matmul(transpose(w), w) - Matrix::identity(w.cols());
  const double value = frobenius_norm(gram);
  if (grad) {
    if (value < 1e-12) {
      *grad = Matrix(w.rows(), w.cols());
    } else {
      *grad = matmul(w, gram) * (2.0 / value);
    }
  }
  return value;
}

// Heaviside-gated variant of the lambda constraint; evaluation only
// (non-differentiable at the threshold), kept for comparison runs.
inline double loss_lambda_heaviside(const Matrix& w, double lambda) {
  const Matrix gram = matmul(w, transpose(w)) - Matrix::identity(w.rows());
  const double g = frobenius_norm(gram);
  return (g >= lambda) ? g : 0.0;
}

// Sigmoid-gated lambda-orthogonality: sigma(alpha (g - lambda)) * g with
// g = ||W W^T - I||_F.
inline double loss_lambda_sigmoid(const Matrix& w, double lambda, double alpha,
                                  Matrix* grad = nullptr) {
  const Matrix gram = matmul(w, transpose(w)) - Matrix::identity(w.rows());
  const double g = frobenius_norm(gram);
  if (g < 1e-12) {
    if (grad) *grad = Matrix(w.rows(), w.cols());
    return 0.0;
  }
  const double s = 1.0 / (1.0 + std::exp(-alpha * (g - lambda)));
  const double value = s * g;
  if (grad) {
    const double dvalue_dg = s + g * alpha * s * (1.0 - s);
    *grad = matmul(gram, w) * (2.0 / g * dvalue_dg);
  }
  return value;
}

// Mean over the batch of ||F(h_old_i) - B(h_new_i)||^2; gradients flow to
// both maps (they are trained jointly).
inline double loss_forward(const Map& forward, const Map& backward,
                           const Matrix& h_old, const Matrix& h_new,
                           std::span<double> grad_forward,
                           std::span<double> grad_backward) {
  if (h_old.rows() != h_new.rows()) fail("DimMismatch", "batch rows differ");
  if (forward.out_dim() != backward.out_dim())
    fail("DimMismatch", "forward/backward output dims differ");
  const Matrix f_out = forward.apply(h_old);
  const Matrix b_out = backward.apply(h_new);
  const double inv_n = 1.0 / static_cast<double>(h_old.rows());
  Matrix diff = f_out - b_out;
  double value = 0.0;
  for (double v : diff.data()) value += v * v;
  value *= inv_n;
  Matrix g = diff * (2.0 * inv_n);
  if (!grad_forward.empty()) forward.backprop(h_old, g, grad_forward, nullptr);
  if (!grad_backward.empty()) {
    g *= -1.0;
    backward.backprop(h_new, g, grad_backward, nullptr);
  }
  return value;
}

namespace detail {

inline Matrix l2_normalize_rows(const Matrix& x, Vector& norms) {
  Matrix out = x;
  norms.assign(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    norms[i] = std::max(norm2(x.row(i)), 1e-12);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= norms[i];
  }
  return out;
}

// dL/draw from dL/dnormalized: (g - u (u . g)) / ||raw||.
inline void denormalize_grad(const Matrix& unit, const Vector& norms,
                             Matrix& grad) {
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    const double proj = dot(unit.row(i), grad.row(i));
    for (std::size_t j = 0; j < grad.cols(); ++j)
      grad(i, j) = (grad(i, j) - unit(i, j) * proj) / norms[i];
  }
}

}  // namespace detail

// Supervised contrastive loss: per anchor, temperature-scaled softmax q over
// dot-product similarities to L2-normalized candidates, cross-entropy
// against a uniform distribution p over same-label candidates. Empty label
// lists select the unlabeled mode: the positive of anchor i is candidate i.
inline double loss_contrastive(const Matrix& anchors, const Matrix& candidates,
                               const std::vector<long>& labels_a,
                               const std::vector<long>& labels_c,
                               double temperature, Matrix* grad_anchors = nullptr,
                               Matrix* grad_candidates = nullptr) {
  if (anchors.cols() != candidates.cols())
    fail("DimMismatch", "anchor/candidate dims differ");
  const std::size_t ka = anchors.rows();
  const std::size_t kc = candidates.rows();
  const bool labeled = !labels_a.empty() || !labels_c.empty();
  if (labeled && (labels_a.size() != ka || labels_c.size() != kc))
    fail("DimMismatch", "label lengths do not match batches");
  if (!labeled && ka != kc)
    fail("DimMismatch", "unlabeled mode needs row-aligned batches");

  Vector na, nc;
  const Matrix ua = detail::l2_normalize_rows(anchors, na);
  const Matrix uc = detail::l2_normalize_rows(candidates, nc);

  Matrix ga(ka, anchors.cols());
  Matrix gc(kc, candidates.cols());
  const double inv_ka = 1.0 / static_cast<double>(ka);
  double value = 0.0;
  Vector q(kc);
  for (std::size_t i = 0; i < ka; ++i) {
    double max_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < kc; ++j) {
      q[j] = dot(ua.row(i), uc.row(j)) / temperature;
      max_sim = std::max(max_sim, q[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < kc; ++j) {
      q[j] = std::exp(q[j] - max_sim);
      z += q[j];
    }
    for (std::size_t j = 0; j < kc; ++j) q[j] /= z;

    std::size_t positives = 0;
    if (labeled) {
      for (std::size_t j = 0; j < kc; ++j)
        if (labels_c[j] == labels_a[i]) ++positives;
      if (positives == 0)
        fail("NoPositive", "anchor " + std::to_string(i) +
                               " has no same-label candidate");
    } else {
      positives = 1;
    }
    const double p = 1.0 / static_cast<double>(positives);
    for (std::size_t j = 0; j < kc; ++j) {
      const bool pos = labeled ? (labels_c[j] == labels_a[i]) : (j == i);
      if (pos) value -= inv_ka * p * std::log(std::max(q[j], 1e-300));
      if (grad_anchors || grad_candidates) {
        const double dsim = inv_ka * (q[j] - (pos ? p : 0.0)) / temperature;
        if (dsim == 0.0) continue;
        for (std::size_t dmx = 0; dmx < anchors.cols(); ++dmx) {
          ga(i, dmx) += dsim * uc(j, dmx);
          gc(j, dmx) += dsim * ua(i, dmx);
        }
      }
    }
  }
  if (grad_anchors) {
    detail::denormalize_grad(ua, na, ga);
    *grad_anchors = std::move(ga);
  }
  if (grad_candidates) {
    detail::denormalize_grad(uc, nc, gc);
    *grad_candidates = std::move(gc);
  }
  return value;
}

// L_contr(F(h_old), B(h_new)) + L_contr(F(h_old), h_old): intra-class
// clustering plus inter-model alignment. h_old_trunc is h_old cut to the
// backward space dimension (identical to h_old when dims match).
inline double loss_combined_contrastive(
    const Map& forward, const Map& backward, const Matrix& h_old,
    const Matrix& h_old_trunc, const Matrix& h_new,
    const std::vector<long>& labels, double temperature,
    std::span<double> grad_forward, std::span<double> grad_backward,
    bool labeled = true, bool through_backward = true) {
  const Matrix f_out = forward.apply(h_old);
  const Matrix b_out = backward.apply(h_new);
  static const std::vector<long> kNoLabels;
  const std::vector<long>& use = labeled ? labels : kNoLabels;

  Matrix ga1, gc1, ga2;
  const bool want_grads = !grad_forward.empty() || !grad_backward.empty();
  double value = loss_contrastive(f_out, b_out, use, use, temperature,
                                  want_grads ? &ga1 : nullptr,
                                  want_grads ? &gc1 : nullptr);
  value += loss_contrastive(f_out, h_old_trunc, use, use, temperature,
                            want_grads ? &ga2 : nullptr, nullptr);
  if (want_grads) {
    ga1 += ga2;
    if (!grad_forward.empty())
      forward.backprop(h_old, ga1, grad_forward, nullptr);
    if (!grad_backward.empty() && through_backward)
      backward.backprop(h_new, gc1, grad_backward, nullptr);
  }
  return value;
}

struct TotalLossOptions {
  bool labeled = true;
  bool contrastive_through_backward = true;
};

struct LossBatch {
  const Matrix& h_old;        // full old-model dim, input to F
  const Matrix& h_old_trunc;  // truncated to the backward space dim
  const Matrix& h_new_trunc;  // truncated to the backward space dim
  const std::vector<long>& labels;
};

// total = w1 L_F + w2 L_B + w3 L_C + L_lambda; the lambda term applies only
// to an affine backward map (it is identically zero for an orthogonal one).
inline LossBreakdown loss_total(const Map& forward, const Map& backward,
                                const LossBatch& batch, const LossWeights& w,
                                std::span<double> grad_forward,
                                std::span<double> grad_backward,
                                const TotalLossOptions& opts = {}) {
  w.validate();
  LossBreakdown out;
  std::vector<double> gf_term(grad_forward.empty() ? 0 : grad_forward.size());
  std::vector<double> gb_term(grad_backward.empty() ? 0 : grad_backward.size());
  const auto add_scaled = [](std::span<double> dst, std::span<const double> src,
                             double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };

  if (w.w_forward > 0.0) {
    std::fill(gf_term.begin(), gf_term.end(), 0.0);
    std::fill(gb_term.begin(), gb_term.end(), 0.0);
    out.l_f = loss_forward(forward, backward, batch.h_old, batch.h_new_trunc,
                           gf_term, gb_term);
    add_scaled(grad_forward, gf_term, w.w_forward);
    add_scaled(grad_backward, gb_term, w.w_forward);
  }
  if (w.w_backward > 0.0) {
    std::fill(gb_term.begin(), gb_term.end(), 0.0);
    out.l_b = loss_backward_mse(backward, batch.h_new_trunc, batch.h_old_trunc,
                                gb_term);
    add_scaled(grad_backward, gb_term, w.w_backward);
  }
  if (w.w_contrastive > 0.0) {
    std::fill(gf_term.begin(), gf_term.end(), 0.0);
    std::fill(gb_term.begin(), gb_term.end(), 0.0);
    out.l_c = loss_combined_contrastive(
        forward, backward, batch.h_old, batch.h_old_trunc, batch.h_new_trunc,
        batch.labels, w.temperature, gf_term, gb_term, opts.labeled,
        opts.contrastive_through_backward);
    add_scaled(grad_forward, gf_term, w.w_contrastive);
    add_scaled(grad_backward, gb_term, w.w_contrastive);
  }
  if (const auto* affine = dynamic_cast<const AffineMap*>(&backward)) {
    Matrix gw;
    out.l_lambda = loss_lambda_sigmoid(affine->weight(), w.lambda, w.alpha,
                                       grad_backward.empty() ? nullptr : &gw);
    if (!grad_backward.empty()) {
      // Affine parameter layout: W row-major first, then the bias.
      for (std::size_t i = 0; i < gw.size(); ++i)
        grad_backward[i] += gw.data()[i];
    }
  }
  out.total = w.w_forward * out.l_f + w.w_backward * out.l_b +
              w.w_contrastive * out.l_c + out.l_lambda;
  return out;
}

// Central finite-difference check: returns the max relative error between
// the analytic gradient and central differences, with denominator
// max(|analytic|, |numeric|, 1e-8).
inline double grad_check(
    const std::function<double(std::span<const double>, std::span<double>)>& fn,
    std::vector<double> params, double delta = 1e-6) {
  std::vector<double> analytic(params.size(), 0.0);
  fn(params, analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + delta;
    const double up = fn(params, {});
    params[i] = saved - delta;
    const double down = fn(params, {});
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * delta);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace lalign
