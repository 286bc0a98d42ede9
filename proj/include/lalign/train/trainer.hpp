#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <json.hpp>

#include "lalign/io/bundle.hpp"
#include "lalign/losses/losses.hpp"
#include "lalign/train/adam.hpp"

namespace lalign {

enum class BackwardKind { orthogonal, lambda_affine };
enum class ForwardKind { affine, mlp };

inline std::string to_string(BackwardKind k) {
  return k == BackwardKind::orthogonal ? "orthogonal" : "lambda_affine";
}
inline std::string to_string(ForwardKind k) {
  return k == ForwardKind::affine ? "affine" : "mlp";
}

inline BackwardKind backward_kind_from_string(const std::string& s) {
  if (s == "orthogonal") return BackwardKind::orthogonal;
  if (s == "lambda_affine") return BackwardKind::lambda_affine;
  fail("InvalidSpec", "unknown backward kind: " + s);
}
inline ForwardKind forward_kind_from_string(const std::string& s) {
  if (s == "affine") return ForwardKind::affine;
  if (s == "mlp") return ForwardKind::mlp;
  fail("InvalidSpec", "unknown forward kind: " + s);
}

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  LossWeights weights;
  BackwardKind backward_kind = BackwardKind::orthogonal;
  ForwardKind forward_kind = ForwardKind::affine;
  bool contrastive_labeled = true;
  bool contrastive_through_backward = true;
  // Init scale for the affine backward weight; stddev = init_scale/sqrt(n).
  double backward_init_scale = 1.0;

  void validate() const {
    adam.validate();
    weights.validate();
    if (batch_size == 0) fail("InvalidSpec", "batch_size must be positive");
  }

  nlohmann::json to_json() const {
    return {
        {"learning_rate", adam.learning_rate},
        {"adam_beta1", adam.beta1},
        {"adam_beta2", adam.beta2},
        {"adam_eps", adam.eps},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"seed", seed},
        {"weights",
         {{"w1", weights.w_forward},
          {"w2", weights.w_backward},
          {"w3", weights.w_contrastive},
          {"lambda", weights.lambda},
          {"alpha", weights.alpha},
          {"temperature", weights.temperature}}},
        {"backward_kind", to_string(backward_kind)},
        {"forward_kind", to_string(forward_kind)},
        {"contrastive_labeled", contrastive_labeled},
        {"contrastive_through_backward", contrastive_through_backward},
        {"backward_init_scale", backward_init_scale},
    };
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.w_forward = w.value("w1", c.weights.w_forward);
      c.weights.w_backward = w.value("w2", c.weights.w_backward);
      c.weights.w_contrastive = w.value("w3", c.weights.w_contrastive);
      c.weights.lambda = w.value("lambda", c.weights.lambda);
      c.weights.alpha = w.value("alpha", c.weights.alpha);
      c.weights.temperature = w.value("temperature", c.weights.temperature);
    }
    c.backward_kind = backward_kind_from_string(
        j.value("backward_kind", to_string(c.backward_kind)));
    c.forward_kind = forward_kind_from_string(
        j.value("forward_kind", to_string(c.forward_kind)));
    c.contrastive_labeled = j.value("contrastive_labeled", c.contrastive_labeled);
    c.contrastive_through_backward =
        j.value("contrastive_through_backward", c.contrastive_through_backward);
    c.backward_init_scale = j.value("backward_init_scale", c.backward_init_scale);
    c.validate();
    return c;
  }
};

struct TrainReport {
  std::vector<LossBreakdown> history;  // one entry per epoch (batch means)
  double final_gram_deviation = 0.0;   // ||W W^T - I||_F (0 for orthogonal B)
  double final_orthogonality_residual = 0.0;  // ||B^T B - I||_F
  double wall_seconds = 0.0;  // informational; not part of emitted reports
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : history)
      hist.push_back({{"total", h.total},
                      {"l_f", h.l_f},
                      {"l_b", h.l_b},
                      {"l_c", h.l_c},
                      {"l_lambda", h.l_lambda}});
    return {{"history", hist},
            {"final_gram_deviation", final_gram_deviation},
            {"final_orthogonality_residual", final_orthogonality_residual},
            {"seed", seed}};
  }
};

struct TrainResult {
  std::unique_ptr<Map> forward;
  std::unique_ptr<Map> backward;
  TrainReport report;
};

// Called after each optimizer step with the freshly updated maps.
using StepObserver = std::function<void(std::size_t step, const Map& forward,
                                        const Map& backward)>;

// Adam-based joint optimization of (F, B) on a paired embedding set. Only
// the transformation parameters change; the embeddings are read-only.
inline TrainResult train(const PairedEmbeddings& pair, const TrainConfig& cfg,
                         const StepObserver& observer = {}) {
  cfg.validate();
  pair.validate();
  if (cfg.weights.w_contrastive > 0 && cfg.contrastive_labeled &&
      !pair.old_set.has_labels())
    fail("MissingLabels", "labeled contrastive loss needs labels");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = pair.old_set.dim;
  const std::size_t n = pair.new_set.dim;
  const std::size_t m = std::min(d, n);  // backward space dimension
  const std::size_t count = pair.old_set.count;

  const Matrix old_full = pair.old_set.vectors;
  const Matrix old_trunc = truncate_cols(old_full, m);
  const Matrix new_trunc = truncate_cols(pair.new_set.vectors, m);

  auto init_rng = make_engine(cfg.seed, 10);
  std::unique_ptr<Map> forward;
  if (cfg.forward_kind == ForwardKind::affine)
    forward = std::make_unique<AffineMap>(AffineMap::random_init(d, m, init_rng));
  else
    forward = std::make_unique<MlpMap>(MlpMap::random_init(d, m, init_rng));
  std::unique_ptr<Map> backward;
  if (cfg.backward_kind == BackwardKind::orthogonal) {
    backward = std::make_unique<OrthogonalMap>(
        OrthogonalMap::random_init(m, init_rng));
  } else {
    auto b = AffineMap::random_init(m, m, init_rng);
    if (cfg.backward_init_scale != 1.0) b.weight() *= cfg.backward_init_scale;
    backward = std::make_unique<AffineMap>(std::move(b));
  }

  const std::size_t nf = forward->param_count();
  const std::size_t nb = backward->param_count();
  std::vector<double> params(nf + nb);
  forward->get_params(std::span(params).first(nf));
  backward->get_params(std::span(params).subspan(nf));
  AdamState state(params.size());
  std::vector<double> grads(params.size());

  const std::size_t batch = std::min(cfg.batch_size, count);
  const std::vector<long> no_labels;
  const std::vector<long>& labels =
      pair.old_set.has_labels() ? pair.old_set.labels : no_labels;
  const TotalLossOptions opts{cfg.contrastive_labeled && !labels.empty(),
                              cfg.contrastive_through_backward};

  TrainReport report;
  report.seed = cfg.seed;
  report.history.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_shuffle(count, cfg.seed, epoch);
    LossBreakdown epoch_mean;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t take = std::min(batch, count - start);
      Matrix bo(take, d), bot(take, m), bnt(take, m);
      std::vector<long> bl;
      bl.reserve(labels.empty() ? 0 : take);
      for (std::size_t r = 0; r < take; ++r) {
        const std::size_t src = order[start + r];
        bo.set_row(r, old_full.row(src));
        bot.set_row(r, old_trunc.row(src));
        bnt.set_row(r, new_trunc.row(src));
        if (!labels.empty()) bl.push_back(labels[src]);
      }
      std::fill(grads.begin(), grads.end(), 0.0);
      const LossBatch lb{bo, bot, bnt, bl};
      const LossBreakdown step =
          loss_total(*forward, *backward, lb, cfg.weights,
                     std::span(grads).first(nf), std::span(grads).subspan(nf),
                     opts);
      adam_step(params, grads, state, cfg.adam);
      forward->set_params(std::span(params).first(nf));
      backward->set_params(std::span(params).subspan(nf));
      if (observer)
        observer(static_cast<std::size_t>(state.t), *forward, *backward);
      epoch_mean.total += step.total;
      epoch_mean.l_f += step.l_f;
      epoch_mean.l_b += step.l_b;
      epoch_mean.l_c += step.l_c;
      epoch_mean.l_lambda += step.l_lambda;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batches, 1));
    epoch_mean.total *= inv;
    epoch_mean.l_f *= inv;
    epoch_mean.l_b *= inv;
    epoch_mean.l_c *= inv;
    epoch_mean.l_lambda *= inv;
    report.history.push_back(epoch_mean);
  }

  if (const auto* affine = dynamic_cast<const AffineMap*>(backward.get())) {
    const Matrix gram = matmul(affine->weight(), transpose(affine->weight())) -
                        Matrix::identity(m);
    report.final_gram_deviation = frobenius_norm(gram);
    report.final_orthogonality_residual = loss_orth(affine->weight());
  } else if (const auto* orth =
                 dynamic_cast<const OrthogonalMap*>(backward.get())) {
    const Matrix& b = orth->realized();
    report.final_orthogonality_residual =
        frobenius_norm(matmul(transpose(b), b) - Matrix::identity(m));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(forward), std::move(backward), std::move(report)};
}

}  // namespace lalign
