#include <doctest.h>

#include <functional>
#include <random>

#include "seg2hoi/autograd.hpp"

using namespace seg2hoi;
using ag::Matrix;
using ag::Var;

namespace {

using Fn = std::function<Var(ag::Tape&, const std::vector<Var>&)>;

Matrix random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double evaluate(const Fn& f, const std::vector<Matrix>& inputs) {
  ag::Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.constant(m));
  return f(t, vars).scalar();
}

// Largest relative error between the tape gradient and central differences.
double gradient_error(const Fn& f, std::vector<Matrix> inputs, double h = 1e-6) {
  ag::Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.variable(m));
  const Var out = f(t, vars);
  t.backward(out);
  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = t.grad_or_empty(vars[k].id()).size() ? t.grad_or_empty(vars[k].id())
                                                                   : Matrix::Zero(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].data()[i];
      inputs[k].data()[i] = orig + h;
      const double up = evaluate(f, inputs);
      inputs[k].data()[i] = orig - h;
      const double down = evaluate(f, inputs);
      inputs[k].data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - analytic.data()[i]) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and matrix ops have correct gradients") {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2), c = random_matrix(rng, 3, 4);
  const Matrix pos = (random_matrix(rng, 3, 4).array().abs() + 0.5).matrix();
  const Matrix row = random_matrix(rng, 1, 4);

  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::matmul(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::mul(ag::matmul_nt(v[0], v[1]), ag::matmul_nt(v[0], v[1]))); }, {a, c}) < 1e-6);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::mul(ag::sub(v[0], v[1]), ag::add(v[0], v[1]))); }, {a, c}) < 1e-7);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::div(v[0], v[1])); }, {a, pos}) < 1e-6);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::mul(ag::add_row(v[0], v[1]), v[0])); }, {a, row}) < 1e-7);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::scale(ag::add_scalar(ag::mul(v[0], v[0]), 2.0), 3.0)); }, {a}) < 1e-6);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::mul(ag::cwise_max(v[0], v[1]), ag::cwise_min(v[0], v[1]))); }, {a, c}) < 1e-6);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::mul(ag::abs(v[0]), ag::relu(v[1]))); }, {a, c}) < 1e-6);
  CHECK(gradient_error([](ag::Tape&, const std::vector<Var>& v) { return ag::sum(ag::mul(ag::sigmoid(v[0]), v[1])); }, {a, c}) < 1e-6);
}

TEST_CASE("structural ops have correct gradients") {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(rng, 4, 3), b = random_matrix(rng, 4, 2), w = random_matrix(rng, 5, 6);
  auto weighted = [w](ag::Tape& t, const Var& x) {
    return ag::sum(ag::mul(x, t.constant(w.topLeftCorner(x.rows(), x.cols()))));
  };
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::concat_cols({v[0], v[1]})); }, {a, b}) < 1e-7);
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::concat_rows({v[0], ag::slice_rows(v[0], 1, 1)})); }, {a}) < 1e-7);
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::slice_cols(v[0], 1, 2)); }, {a}) < 1e-7);
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::gather_rows(v[0], {3, 0, 3})); }, {a}) < 1e-7);
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::gather_points(v[0], {1, 2}, {{0, 2}, {2, 1}})); }, {a}) < 1e-7);
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::masked_softmax_rows(v[0], {true, false, true})); }, {a}) < 1e-6);
  CHECK(gradient_error([&](ag::Tape& t, const std::vector<Var>& v) { return weighted(t, ag::normalize_rows(v[0])); }, {a}) < 1e-6);
}

TEST_CASE("fused losses match direct formulas and differentiate") {
  std::mt19937_64 rng(4);
  const Matrix logits = random_matrix(rng, 3, 4, 2.0);
  Matrix targets = Matrix::Zero(3, 4);
  targets(0, 1) = targets(1, 3) = targets(2, 0) = targets(2, 2) = 1.0;
  const std::vector<bool> rows{true, false, true};

  double focal = 0.0;
  for (int r : {0, 2}) {
    for (int c = 0; c < 4; ++c) {
      const double p = 1.0 / (1.0 + std::exp(-logits(r, c)));
      const double t = targets(r, c);
      const double pt = t > 0 ? p : 1 - p;
      const double at = t > 0 ? 0.25 : 0.75;
      focal += -at * std::pow(1 - pt, 2.0) * std::log(pt);
    }
  }
  ag::Tape t;
  CHECK(ag::sigmoid_focal_sum(t.constant(logits), targets, rows, 0.25, 2.0).scalar() == doctest::Approx(focal).epsilon(1e-10));

  const std::vector<int> labels{2, -1, 0};
  const std::vector<double> cw{1.0, 1.0, 0.1, 1.0};
  double num = 0.0, den = 0.0;
  for (int r : {0, 2}) {
    const Eigen::RowVectorXd row = logits.row(r);
    const double lse = std::log(row.array().exp().sum());
    num += cw[static_cast<size_t>(labels[static_cast<size_t>(r)])] * (lse - row(labels[static_cast<size_t>(r)]));
    den += cw[static_cast<size_t>(labels[static_cast<size_t>(r)])];
  }
  CHECK(ag::softmax_cross_entropy(t.constant(logits), labels, cw).scalar() == doctest::Approx(num / den).epsilon(1e-10));

  double bce = 0.0, dice = 0.0;
  for (int r = 0; r < 3; ++r) {
    double row_bce = 0.0, inter = 0.0, ps = 0.0, ts = 0.0;
    for (int c = 0; c < 4; ++c) {
      const double p = 1.0 / (1.0 + std::exp(-logits(r, c)));
      row_bce += -(targets(r, c) * std::log(p) + (1 - targets(r, c)) * std::log(1 - p));
      inter += p * targets(r, c);
      ps += p;
      ts += targets(r, c);
    }
    bce += row_bce / 4;
    dice += 1.0 - (2 * inter + 1) / (ps + ts + 1);
  }
  CHECK(ag::bce_rows_sum(t.constant(logits), targets).scalar() == doctest::Approx(bce).epsilon(1e-10));
  CHECK(ag::dice_rows_sum(t.constant(logits), targets).scalar() == doctest::Approx(dice).epsilon(1e-10));

  CHECK(gradient_error([&](ag::Tape&, const std::vector<Var>& v) { return ag::sigmoid_focal_sum(v[0], targets, rows, 0.5, 2.0); }, {logits}) < 1e-6);
  CHECK(gradient_error([&](ag::Tape&, const std::vector<Var>& v) { return ag::softmax_cross_entropy(v[0], labels, cw); }, {logits}) < 1e-6);
  CHECK(gradient_error([&](ag::Tape&, const std::vector<Var>& v) { return ag::bce_rows_sum(v[0], targets); }, {logits}) < 1e-6);
  CHECK(gradient_error([&](ag::Tape&, const std::vector<Var>& v) { return ag::dice_rows_sum(v[0], targets); }, {logits}) < 1e-6);
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  ag::Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  const Var y = ag::add(ag::mul(x, x), x);
  t.backward(y);
  CHECK(t.grad_or_empty(x.id())(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("constants receive no gradient") {
  ag::Tape t;
  const Var c = t.constant(Matrix::Ones(2, 2));
  const Var x = t.variable(Matrix::Ones(2, 2));
  t.backward(ag::sum(ag::mul(c, x)));
  CHECK(t.grad_or_empty(c.id()).size() == 0);
  CHECK(t.grad_or_empty(x.id()).isApprox(Matrix::Ones(2, 2)));
}
