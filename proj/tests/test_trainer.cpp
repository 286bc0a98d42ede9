#include <catch2/catch_amalgamated.hpp>

#include "lalign/io/synth.hpp"
#include "lalign/train/trainer.hpp"

using namespace lalign;

TEST_CASE("adam minimizes a quadratic") {
  // f(x) = sum (x_i - t_i)^2
  const Vector target{1.0, -2.0, 0.5};
  Vector x{10.0, 10.0, 10.0};
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState state(x.size());
  for (int step = 0; step < 2000; ++step) {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * (x[i] - target[i]);
    adam_step(x, g, state, cfg);
  }
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(x[i] == Catch::Approx(target[i]).margin(1e-4));
}

TEST_CASE("adam first step has magnitude learning_rate") {
  Vector x{0.0};
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState state(1);
  Vector g{123.0};  // bias correction makes the first step lr * sign(g)
  adam_step(x, g, state, cfg);
  CHECK(x[0] == Catch::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("train config json round trip") {
  TrainConfig cfg;
  cfg.adam.learning_rate = 0.005;
  cfg.batch_size = 64;
  cfg.epochs = 17;
  cfg.seed = 99;
  cfg.weights.w_forward = 0.25;
  cfg.weights.lambda = 6.0;
  cfg.backward_kind = BackwardKind::lambda_affine;
  cfg.forward_kind = ForwardKind::mlp;
  cfg.contrastive_labeled = false;
  cfg.backward_init_scale = 3.0;

  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.adam.learning_rate == cfg.adam.learning_rate);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.seed == cfg.seed);
  CHECK(back.weights.w_forward == cfg.weights.w_forward);
  CHECK(back.weights.lambda == cfg.weights.lambda);
  CHECK(back.backward_kind == cfg.backward_kind);
  CHECK(back.forward_kind == cfg.forward_kind);
  CHECK(back.contrastive_labeled == cfg.contrastive_labeled);
  CHECK(back.backward_init_scale == cfg.backward_init_scale);

  CHECK_THROWS_AS(TrainConfig::from_json({{"backward_kind", "nope"}}), Error);
}

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.adam.learning_rate = 0.02;
  cfg.batch_size = 64;
  cfg.epochs = 60;
  cfg.seed = 7;
  return cfg;
}

SynthSpec small_spec() {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.per_class = 8;
  spec.dim_old = 6;
  spec.dim_new = 6;
  spec.class_spread = 0.5;
  spec.seed = 31;
  return spec;
}

}  // namespace

TEST_CASE("training drives the loss down") {
  const PairedEmbeddings pair = synth_pair(small_spec());
  const TrainResult result = train(pair, small_config());
  REQUIRE(result.report.history.size() == 60);
  const double first = result.report.history.front().total;
  const double last = result.report.history.back().total;
  CHECK(last < 0.5 * first);
  CHECK(result.forward->in_dim() == 6);
  CHECK(result.backward->kind() == "orthogonal");
  // An orthogonal backward map stays orthogonal to machine precision.
  CHECK(result.report.final_orthogonality_residual < 1e-10);
}

TEST_CASE("training with an orthogonal distortion recovers a near-inverse") {
  SynthSpec spec = small_spec();
  spec.distortion = Distortion::orthogonal;
  const PairedEmbeddings pair = synth_pair(spec);
  TrainConfig cfg = small_config();
  cfg.adam.learning_rate = 0.05;
  cfg.epochs = 1500;
  cfg.weights.w_contrastive = 0.0;  // pure reconstruction objective
  const TrainResult result = train(pair, cfg);
  // B maps new embeddings back near the old ones.
  const Matrix recon = result.backward->apply(pair.new_set.vectors);
  const Matrix diff = recon - pair.old_set.vectors;
  double mse = 0.0;
  for (double v : diff.data()) mse += v * v;
  mse /= static_cast<double>(pair.old_set.count);
  CHECK(mse < 1e-2);
}

TEST_CASE("training is deterministic in the seed") {
  const PairedEmbeddings pair = synth_pair(small_spec());
  TrainConfig cfg = small_config();
  cfg.epochs = 5;
  const TrainResult a = train(pair, cfg);
  const TrainResult b = train(pair, cfg);
  CHECK(a.forward->params() == b.forward->params());
  CHECK(a.backward->params() == b.backward->params());
  cfg.seed = 8;
  const TrainResult c = train(pair, cfg);
  CHECK(a.forward->params() != c.forward->params());
}

TEST_CASE("dimension change truncates to the smaller space") {
  SynthSpec spec = small_spec();
  spec.dim_old = 4;
  spec.dim_new = 8;
  const PairedEmbeddings pair = synth_pair(spec);
  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  const TrainResult result = train(pair, cfg);
  CHECK(result.forward->in_dim() == 4);
  CHECK(result.forward->out_dim() == 4);
  CHECK(result.backward->in_dim() == 4);
  CHECK(result.backward->out_dim() == 4);
}

TEST_CASE("lambda-affine backward map reports its gram deviation") {
  const PairedEmbeddings pair = synth_pair(small_spec());
  TrainConfig cfg = small_config();
  cfg.epochs = 10;
  cfg.backward_kind = BackwardKind::lambda_affine;
  cfg.weights.lambda = 1.0;
  const TrainResult result = train(pair, cfg);
  CHECK(result.backward->kind() == "affine");
  CHECK(result.report.final_gram_deviation > 0.0);
}

TEST_CASE("labeled contrastive training requires labels") {
  PairedEmbeddings pair = synth_pair(small_spec());
  pair.old_set.labels.clear();
  pair.new_set.labels.clear();
  TrainConfig cfg = small_config();
  try {
    train(pair, cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == "MissingLabels");
  }
  // unlabeled contrastive mode accepts the same data
  cfg.contrastive_labeled = false;
  cfg.epochs = 2;
  const TrainResult result = train(pair, cfg);
  CHECK(result.report.history.size() == 2);
}

TEST_CASE("mlp forward map trains") {
  const PairedEmbeddings pair = synth_pair(small_spec());
  TrainConfig cfg = small_config();
  cfg.forward_kind = ForwardKind::mlp;
  cfg.epochs = 30;
  const TrainResult result = train(pair, cfg);
  CHECK(result.forward->kind() == "mlp");
  CHECK(result.report.history.back().total <
        result.report.history.front().total);
}

TEST_CASE("train report json omits timing") {
  TrainReport report;
  report.history.push_back({1.0, 0.5, 0.25, 0.25, 0.0});
  report.wall_seconds = 123.0;
  const nlohmann::json j = report.to_json();
  CHECK_FALSE(j.contains("wall_seconds"));
  CHECK(j.at("history").size() == 1);
}
