#include <catch2/catch_amalgamated.hpp>

#include "lalign/losses/losses.hpp"

using namespace lalign;

TEST_CASE("backward mse is zero for a perfect map") {
  AffineMap b = AffineMap::identity(3);
  auto rng = make_engine(81);
  const Matrix x = random_normal(5, 3, rng);
  CHECK(loss_backward_mse(b, x, x, {}) == 0.0);
}

TEST_CASE("backward mse hand value") {
  AffineMap b = AffineMap::identity(2);
  const Matrix h_new = Matrix::from_rows(2, 2, {1, 0, 0, 1});
  const Matrix h_old = Matrix::from_rows(2, 2, {0, 0, 0, 0});
  // mean of ||(1,0)||^2 and ||(0,1)||^2 = 1
  CHECK(loss_backward_mse(b, h_new, h_old, {}) == Catch::Approx(1.0));
}

TEST_CASE("loss_orth values") {
  CHECK(loss_orth(Matrix::identity(4)) == 0.0);
  // W = 2 I_2: W^T W - I = 3 I_2, so the norm is 3 sqrt(2).
  CHECK(loss_orth(Matrix::identity(2) * 2.0) ==
        Catch::Approx(3.0 * std::sqrt(2.0)));
}

TEST_CASE("loss_orth gradient is zero-safe at the optimum") {
  Matrix g;
  CHECK(loss_orth(Matrix::identity(3), &g) == 0.0);
  CHECK(frobenius_norm(g) == 0.0);
}

TEST_CASE("loss_orth gradient matches finite differences") {
  auto rng = make_engine(82);
  const Matrix w0 = random_normal(4, 3, rng);
  Matrix analytic;
  loss_orth(w0, &analytic);
  const double delta = 1e-6;
  for (std::size_t k = 0; k < w0.size(); ++k) {
    Matrix wp = w0, wm = w0;
    wp.data()[k] += delta;
    wm.data()[k] -= delta;
    const double numeric = (loss_orth(wp) - loss_orth(wm)) / (2 * delta);
    CHECK(analytic.data()[k] == Catch::Approx(numeric).margin(1e-6));
  }
}

TEST_CASE("heaviside lambda gate") {
  const Matrix w = Matrix::identity(2) * 2.0;  // g = 3 sqrt(2) ~ 4.243
  const double g = 3.0 * std::sqrt(2.0);
  CHECK(loss_lambda_heaviside(w, 1.0) == Catch::Approx(g));
  CHECK(loss_lambda_heaviside(w, 10.0) == 0.0);
  CHECK(loss_lambda_heaviside(Matrix::identity(3), 0.0) == 0.0);
}

TEST_CASE("sigmoid lambda pinned value at the threshold") {
  // g = lambda puts the sigmoid exactly at 1/2, so the loss is g/2.
  const Matrix w = Matrix::identity(2) * 2.0;
  const double g = 3.0 * std::sqrt(2.0);
  CHECK(loss_lambda_sigmoid(w, g, 10.0) == Catch::Approx(0.5 * g));
  // far above threshold the gate saturates to ~1
  CHECK(loss_lambda_sigmoid(w, 0.0, 10.0) == Catch::Approx(g).epsilon(1e-8));
  // far below threshold it vanishes
  CHECK(loss_lambda_sigmoid(w, 100.0, 10.0) < 1e-6);
}

TEST_CASE("sigmoid lambda gradient matches finite differences") {
  auto rng = make_engine(83);
  const Matrix w0 = random_normal(3, 4, rng);
  for (double lambda : {0.0, 1.0, 4.0}) {
    Matrix analytic;
    loss_lambda_sigmoid(w0, lambda, 10.0, &analytic);
    const double delta = 1e-7;
    for (std::size_t k = 0; k < w0.size(); k += 3) {
      Matrix wp = w0, wm = w0;
      wp.data()[k] += delta;
      wm.data()[k] -= delta;
      const double numeric = (loss_lambda_sigmoid(wp, lambda, 10.0) -
                              loss_lambda_sigmoid(wm, lambda, 10.0)) /
                             (2 * delta);
      CHECK(analytic.data()[k] == Catch::Approx(numeric).margin(1e-5));
    }
  }
}

TEST_CASE("forward loss sends gradients to both maps") {
  auto rng = make_engine(84);
  AffineMap f = AffineMap::random_init(4, 3, rng);
  AffineMap b = AffineMap::random_init(3, 3, rng);
  const Matrix h_old = random_normal(5, 4, rng);
  const Matrix h_new = random_normal(5, 3, rng);
  Vector gf(f.param_count(), 0.0), gb(b.param_count(), 0.0);
  const double value = loss_forward(f, b, h_old, h_new, gf, gb);
  CHECK(value > 0.0);
  CHECK(norm2(gf) > 0.0);
  CHECK(norm2(gb) > 0.0);

  const double err_f = grad_check(
      [&](std::span<const double> p, std::span<double> g) {
        AffineMap fc = f;
        fc.set_params(p);
        return loss_forward(fc, b, h_old, h_new, g, {});
      },
      f.params());
  CHECK(err_f < 1e-6);
  const double err_b = grad_check(
      [&](std::span<const double> p, std::span<double> g) {
        AffineMap bc = b;
        bc.set_params(p);
        return loss_forward(f, bc, h_old, h_new, {}, g);
      },
      b.params());
  CHECK(err_b < 1e-6);
}

TEST_CASE("contrastive pinned value: two orthogonal anchors") {
  // anchors == candidates == I_2, labels {0,1}, tau = 1. Per anchor the
  // softmax over sims (1, 0) gives q_pos = e/(e+1); loss = -ln(e/(e+1)).
  const Matrix pts = Matrix::identity(2);
  const std::vector<long> labels{0, 1};
  const double value = loss_contrastive(pts, pts, labels, labels, 1.0);
  CHECK(value == Catch::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))));
  CHECK(value == Catch::Approx(0.31326168751822286).epsilon(1e-12));
}

TEST_CASE("contrastive is invariant to rescaling inputs") {
  auto rng = make_engine(85);
  const Matrix a = random_normal(6, 4, rng);
  const Matrix c = random_normal(6, 4, rng);
  const std::vector<long> labels{0, 0, 1, 1, 2, 2};
  const double base = loss_contrastive(a, c, labels, labels, 0.2);
  const double scaled = loss_contrastive(a * 7.5, c * 0.3, labels, labels, 0.2);
  CHECK(base == Catch::Approx(scaled).epsilon(1e-12));
}

TEST_CASE("contrastive throws without a positive") {
  const Matrix a = Matrix::identity(2);
  try {
    loss_contrastive(a, a, {0, 1}, {1, 1}, 1.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == "NoPositive");
  }
}

TEST_CASE("contrastive gradients match finite differences") {
  auto rng = make_engine(86);
  const Matrix a0 = random_normal(5, 3, rng);
  const Matrix c0 = random_normal(5, 3, rng);
  const std::vector<long> labels{0, 0, 1, 1, 1};
  const double delta = 1e-6;

  Matrix ga, gc;
  loss_contrastive(a0, c0, labels, labels, 0.3, &ga, &gc);
  for (std::size_t k = 0; k < a0.size(); ++k) {
    Matrix ap = a0, am = a0;
    ap.data()[k] += delta;
    am.data()[k] -= delta;
    const double numeric = (loss_contrastive(ap, c0, labels, labels, 0.3) -
                            loss_contrastive(am, c0, labels, labels, 0.3)) /
                           (2 * delta);
    CHECK(ga.data()[k] == Catch::Approx(numeric).margin(1e-6));
  }
  for (std::size_t k = 0; k < c0.size(); ++k) {
    Matrix cp = c0, cm = c0;
    cp.data()[k] += delta;
    cm.data()[k] -= delta;
    const double numeric = (loss_contrastive(a0, cp, labels, labels, 0.3) -
                            loss_contrastive(a0, cm, labels, labels, 0.3)) /
                           (2 * delta);
    CHECK(gc.data()[k] == Catch::Approx(numeric).margin(1e-6));
  }
}

TEST_CASE("unlabeled contrastive uses row alignment") {
  auto rng = make_engine(87);
  const Matrix a = random_normal(4, 3, rng);
  // identical candidates: aligned rows are the positives, so the self loss
  // beats the same batch with rows rotated out of alignment
  const double self = loss_contrastive(a, a, {}, {}, 0.05);
  Matrix shifted(4, 3);
  for (std::size_t i = 0; i < 4; ++i) shifted.set_row(i, a.row((i + 1) % 4));
  const double misaligned = loss_contrastive(a, shifted, {}, {}, 0.05);
  CHECK(self < 0.5);
  CHECK(self < misaligned);
  // mismatched row counts are rejected in unlabeled mode
  CHECK_THROWS_AS(loss_contrastive(a, random_normal(5, 3, rng), {}, {}, 0.05),
                  Error);
}

TEST_CASE("total loss equals the weighted sum of its parts") {
  auto rng = make_engine(88);
  AffineMap f = AffineMap::random_init(5, 4, rng);
  AffineMap b = AffineMap::random_init(4, 4, rng);
  const Matrix h_old = random_normal(6, 5, rng);
  const Matrix h_old_trunc = truncate_cols(h_old, 4);
  const Matrix h_new = random_normal(6, 4, rng);
  const std::vector<long> labels{0, 0, 0, 1, 1, 1};

  LossWeights w;
  w.w_forward = 0.7;
  w.w_backward = 1.3;
  w.w_contrastive = 0.4;
  w.lambda = 1.0;

  const LossBatch batch{h_old, h_old_trunc, h_new, labels};
  const LossBreakdown out = loss_total(f, b, batch, w, {}, {});
  CHECK(out.total == Catch::Approx(0.7 * out.l_f + 1.3 * out.l_b +
                                   0.4 * out.l_c + out.l_lambda));
  CHECK(out.l_f > 0.0);
  CHECK(out.l_b > 0.0);
  CHECK(out.l_c > 0.0);
  CHECK(out.l_lambda >= 0.0);
}

TEST_CASE("total loss lambda term vanishes for an orthogonal backward map") {
  auto rng = make_engine(89);
  AffineMap f = AffineMap::random_init(4, 4, rng);
  OrthogonalMap b = OrthogonalMap::random_init(4, rng);
  const Matrix h_old = random_normal(5, 4, rng);
  const Matrix h_new = random_normal(5, 4, rng);
  const std::vector<long> labels{0, 0, 1, 1, 1};
  LossWeights w;
  w.lambda = 3.0;
  const LossBatch batch{h_old, h_old, h_new, labels};
  const LossBreakdown out = loss_total(f, b, batch, w, {}, {});
  CHECK(out.l_lambda == 0.0);
}

TEST_CASE("total loss gradient matches finite differences (joint params)") {
  auto rng = make_engine(90);
  for (const bool orth_backward : {false, true}) {
    AffineMap f = AffineMap::random_init(5, 4, rng);
    std::unique_ptr<Map> b;
    if (orth_backward)
      b = std::make_unique<OrthogonalMap>(OrthogonalMap::random_init(4, rng));
    else
      b = std::make_unique<AffineMap>(AffineMap::random_init(4, 4, rng));
    const Matrix h_old = random_normal(6, 5, rng);
    const Matrix h_old_trunc = truncate_cols(h_old, 4);
    const Matrix h_new = random_normal(6, 4, rng);
    const std::vector<long> labels{0, 0, 0, 1, 1, 1};
    LossWeights w;
    w.lambda = orth_backward ? 0.0 : 2.0;
    const LossBatch batch{h_old, h_old_trunc, h_new, labels};

    const std::size_t nf = f.param_count();
    const std::size_t nb = b->param_count();
    Vector joint(nf + nb);
    f.get_params(std::span<double>(joint).first(nf));
    b->get_params(std::span<double>(joint).subspan(nf));

    const double err = grad_check(
        [&](std::span<const double> p, std::span<double> g) {
          AffineMap fc = f;
          auto bc = b->clone();
          fc.set_params(p.first(nf));
          bc->set_params(p.subspan(nf));
          if (g.empty())
            return loss_total(fc, *bc, batch, w, {}, {}).total;
          return loss_total(fc, *bc, batch, w, g.first(nf), g.subspan(nf))
              .total;
        },
        joint);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("grad_check flags a wrong gradient") {
  const double err = grad_check(
      [](std::span<const double> p, std::span<double> g) {
        if (!g.empty()) g[0] = 1.0;  // wrong: true gradient is 2 p[0]
        return p[0] * p[0];
      },
      {3.0});
  CHECK(err > 0.5);
}
