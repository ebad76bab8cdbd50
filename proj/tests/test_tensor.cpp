// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "sentinel/adam.hpp"
#include "sentinel/params.hpp"
#include "sentinel/tensor.hpp"

using namespace sentinel;
using namespace sentinel::ag;
using sentinel::testing::max_grad_error;

TEST_CASE("matmul against identity and a hand example") {
  Tape tape;
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor p = matmul(tape, a, eye);
  for (int i = 0; i < 4; ++i) CHECK(p.values()[i] == a.values()[i]);

  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor q = matmul(tape, a, b);
  CHECK(q.at(0, 0) == 19);
  CHECK(q.at(0, 1) == 22);
  CHECK(q.at(1, 0) == 43);
  CHECK(q.at(1, 1) == 50);
  CHECK_THROWS_AS(matmul(tape, a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("pointwise ops match closed forms") {
  Tape tape;
  Tensor z = Tensor::scalar(0.0);
  CHECK(sigmoid(tape, z).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(tanh_t(tape, z).item() == doctest::Approx(0.0));
  CHECK(exp_t(tape, z).item() == doctest::Approx(1.0));
  CHECK(log_t(tape, Tensor::scalar(std::exp(1.0))).item() == doctest::Approx(1.0));
  CHECK(max_scalar(tape, Tensor::scalar(-3.0), 0.0).item() == 0.0);
  CHECK(abs_t(tape, Tensor::scalar(-2.5)).item() == 2.5);
  CHECK_THROWS_AS(exp_t(tape, Tensor::scalar(800.0)), NumericError);
  CHECK_THROWS_AS(log_t(tape, Tensor::scalar(0.0)), NumericError);
}

TEST_CASE("softmax rows sum to one and are shift-invariant") {
  Tape tape;
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 1000, 1001, 1002});
  Tensor s = softmax_rows(tape, a);
  for (int r = 0; r < 2; ++r) {
    double sum = s.at(r, 0) + s.at(r, 1) + s.at(r, 2);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // same logits shifted by 999 must give the same distribution
  for (int c = 0; c < 3; ++c)
    CHECK(s.at(0, c) == doctest::Approx(s.at(1, c)).epsilon(1e-12));
}

TEST_CASE("layer norm maps [1,3] to [-1,1] up to epsilon") {
  Tape tape;
  Tensor a = Tensor::from({1, 2}, {1, 3});
  Tensor g = Tensor::from({1, 2}, {1, 1});
  Tensor b = Tensor::from({1, 2}, {0, 0});
  Tensor y = layer_norm(tape, a, g, b);
  CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("losses match hand values") {
  Tape tape;
  // BCE of p=0.5 against target 1 is ln 2
  Tensor p = Tensor::scalar(0.5);
  Tensor t1 = Tensor::scalar(1.0);
  CHECK(bce_loss(tape, p, t1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(bce_loss(tape, p, Tensor::scalar(0.3)), NumericError);

  Tensor pred = Tensor::from({1, 2}, {1, 2});
  Tensor targ = Tensor::from({1, 2}, {3, 0});
  // mean((2^2 + 2^2) / 2) = 4
  CHECK(mse_loss(tape, pred, targ).item() == doctest::Approx(4.0));
}

TEST_CASE("gradient check: elementary op chain x*x has gradient 2x") {
  Tensor x = Tensor::from({1, 3}, {0.5, -1.25, 2.0}, true);
  Tape tape;
  Tensor y = sum_all(tape, mul(tape, x, x));
  tape.backward(y);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.values()[i]).epsilon(1e-12));
}

TEST_CASE("gradient check: composite expressions vs finite differences") {
  Rng rng(123);
  auto randmat = [&](int r, int c) {
    Tensor t = Tensor::zeros({r, c});
    for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform(-1.0, 1.0);
    return t;
  };
  Tensor a = randmat(3, 4), w = randmat(4, 4), b = randmat(1, 4);
  Tensor g = Tensor::from({1, 4}, {1.1, 0.9, 1.0, 1.2});
  Tensor bb = Tensor::from({1, 4}, {0.1, -0.1, 0.0, 0.2});
  Tensor target = randmat(3, 4);

  SUBCASE("matmul + bias + sigmoid + mse") {
    auto loss = [&](Tape& tp) {
      return mse_loss(tp, sigmoid(tp, add_rowvec(tp, matmul(tp, a, w), b)), target);
    };
    CHECK(max_grad_error(loss, {a, w, b}) < 1e-4);
  }
  SUBCASE("layer norm + tanh") {
    auto loss = [&](Tape& tp) {
      return mse_loss(tp, tanh_t(tp, layer_norm(tp, a, g, bb)), target);
    };
    CHECK(max_grad_error(loss, {a, g, bb}) < 1e-4);
  }
  SUBCASE("softmax attention-style product") {
    auto loss = [&](Tape& tp) {
      Tensor scores = matmul(tp, a, transpose(tp, a));
      return mse_loss(tp, matmul(tp, softmax_rows(tp, scores), a), target);
    };
    CHECK(max_grad_error(loss, {a}) < 1e-4);
  }
  SUBCASE("exp log abs maximum scale") {
    Tensor s = Tensor::scalar(0.7);
    auto loss = [&](Tape& tp) {
      Tensor e = exp_t(tp, mul_scalar(tp, a, 0.3));
      Tensor l = log_t(tp, add_scalar(tp, abs_t(tp, a), 1.0));
      Tensor m = maximum(tp, e, l);
      return mse_loss(tp, scale(tp, m, s), target);
    };
    CHECK(max_grad_error(loss, {a, s}) < 1e-4);
  }
  SUBCASE("bce fused backward") {
    Tensor logit = Tensor::scalar(0.37);
    auto loss = [&](Tape& tp) {
      return bce_loss(tp, sigmoid(tp, logit), Tensor::scalar(1.0));
    };
    CHECK(max_grad_error(loss, {logit}) < 1e-4);
  }
  SUBCASE("stack_rows and row selection") {
    auto loss = [&](Tape& tp) {
      std::vector<Tensor> rows;
      for (int i = 0; i < 3; ++i) rows.push_back(row(tp, a, 2 - i));
      return mse_loss(tp, stack_rows(tp, rows), target);
    };
    CHECK(max_grad_error(loss, {a}) < 1e-4);
  }
}

TEST_CASE("adam first step moves a weight by roughly lr") {
  // With g constant, m_hat/sqrt(v_hat) = 1 at t=1, so w -> w - lr * 1/(1+eps').
  ParamStore store;
  Tensor w = Tensor::from({1, 1}, {1.0});
  store.add("w", w);
  w.accumulate(Vec::Constant(1, 0.5));
  Adam opt(0.1);
  opt.step(store);
  CHECK(w.values()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK((!w.has_grad() || w.grad().isZero()));  // grads cleared
}

TEST_CASE("adam converges on a quadratic in 100s of steps") {
  ParamStore store;
  Tensor w = Tensor::from({1, 2}, {4.0, -3.0});
  store.add("w", w);
  Adam opt(0.05);
  for (int i = 0; i < 400; ++i) {
    w.zero_grad();
    Vec g(2);
    g << 2.0 * (w.values()[0] - 1.0), 2.0 * (w.values()[1] + 2.0);
    w.accumulate(g);
    opt.step(store);
  }
  CHECK(w.values()[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(w.values()[1] == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("adam refuses params with missing gradients") {
  ParamStore store;
  Tensor w = Tensor::from({1, 1}, {1.0});
  store.add("w", w);
  Adam opt(0.1);
  CHECK_THROWS_AS(opt.step(store), GradError);
}

TEST_CASE("non-finite forward values are rejected") {
  Tape tape;
  Tensor a = Tensor::from({1, 2}, {1.0, 0.0});
  Tensor b = Tensor::from({1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(div(tape, a, b), NumericError);
}

TEST_CASE("rng streams are deterministic and fork-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng f1 = c.fork(1), f2 = c.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
  double u = Rng(7).uniform();
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
  // Box-Muller normals have roughly the right first two moments
  Rng n(99);
  double mean = 0, var = 0;
  const int kN = 20000;
  std::vector<double> xs(kN);
  for (auto& x : xs) x = n.normal();
  for (double x : xs) mean += x;
  mean /= kN;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= kN;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}
