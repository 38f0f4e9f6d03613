#include <doctest.h>

#include <random>

#include "seg2hoi/nn.hpp"

using namespace seg2hoi;
using nn::Matrix;

TEST_CASE("single-head attention equals the hand-computed result") {
  std::mt19937_64 rng(0);
  nn::ParameterStore store;
  const auto mha = nn::MultiHeadAttention::create(store, "a", 4, 1, rng);
  for (const auto* l : {&mha.q, &mha.k, &mha.v, &mha.o}) {
    store.value(l->weight) = Matrix::Identity(4, 4);
    store.value(l->bias).setZero();
  }
  Matrix q(1, 4), k(2, 4), v(2, 4);
  q << 1, 0, 0, 0;
  k << 2, 0, 0, 0, 0, 2, 0, 0;
  v << 1, 2, 3, 4, 5, 6, 7, 8;
  ag::Tape t;
  nn::Binder bind(t, store);
  const Matrix out = mha(bind, t.constant(q), t.constant(k), t.constant(v), {true, true}).value();
  // scores 2/sqrt(4) = 1 and 0.
  const double w0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
  Matrix expected = w0 * v.row(0) + (1 - w0) * v.row(1);
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);

  const Matrix masked = mha(bind, t.constant(q), t.constant(k), t.constant(v), {false, true}).value();
  CHECK((masked - v.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix none = mha(bind, t.constant(q), t.constant(k), t.constant(v), {false, false}).value();
  CHECK(none.isZero());
}

TEST_CASE("multi-head attention splits channels per head") {
  std::mt19937_64 rng(0);
  nn::ParameterStore store;
  const auto mha = nn::MultiHeadAttention::create(store, "a", 4, 2, rng);
  for (const auto* l : {&mha.q, &mha.k, &mha.v, &mha.o}) {
    store.value(l->weight) = Matrix::Identity(4, 4);
    store.value(l->bias).setZero();
  }
  Matrix q(1, 4), k(2, 4), v(2, 4);
  q << 1, 0, 0, 1;
  k << 1, 0, 0, 0, 0, 0, 0, 1;
  v << 1, 2, 3, 4, 5, 6, 7, 8;
  ag::Tape t;
  nn::Binder bind(t, store);
  const Matrix out = mha(bind, t.constant(q), t.constant(k), t.constant(v), {true, true}).value();
  const double s = 1.0 / std::sqrt(2.0);
  const double h0 = std::exp(s) / (std::exp(s) + 1.0);  // head 0 prefers key 0
  const double h1 = 1.0 / (std::exp(s) + 1.0);          // head 1 prefers key 1
  CHECK(out(0, 0) == doctest::Approx(h0 * 1 + (1 - h0) * 5));
  CHECK(out(0, 3) == doctest::Approx(h1 * 4 + (1 - h1) * 8));
}

TEST_CASE("AdamW first step follows the closed form") {
  nn::ParameterStore store;
  store.add("w", Matrix::Constant(1, 2, 1.0));
  store.add("frozen", Matrix::Constant(1, 1, 5.0), false);
  nn::AdamW opt(store, {0.9, 0.999, 1e-8, 0.01});
  Matrix g(1, 2);
  g << 0.5, -2.0;
  opt.step(store, {g, Matrix::Constant(1, 1, 1.0)}, 0.1);
  // m_hat = g, v_hat = g^2, so the update is lr * sign(g) after decay.
  CHECK(store.value(0)(0, 0) == doctest::Approx(1.0 * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(store.value(0)(0, 1) == doctest::Approx(1.0 * (1 - 0.001) + 0.1));
  CHECK(store.value(1)(0, 0) == 5.0);
  CHECK(opt.steps() == 1);
}

TEST_CASE("parameter store names are unique and binder gradients cover every entry") {
  nn::ParameterStore store;
  std::mt19937_64 rng(1);
  const auto lin = nn::Linear::create(store, "lin", 3, 2, rng);
  CHECK_THROWS_AS(store.add("lin.weight", Matrix::Zero(1, 1)), std::invalid_argument);
  CHECK(store.find("lin.bias") == lin.bias);
  CHECK(store.scalar_count() == 8);
  ag::Tape t;
  nn::Binder bind(t, store);
  const auto y = lin(bind, t.constant(Matrix::Ones(4, 3)));
  t.backward(ag::sum(y));
  const auto grads = bind.gradients();
  REQUIRE(grads.size() == 2);
  CHECK(grads[1].isApprox(Matrix::Constant(1, 2, 4.0)));
  CHECK(grads[0].isApprox(Matrix::Constant(3, 2, 4.0)));
}
