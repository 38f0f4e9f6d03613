#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "seg2hoi/criterion.hpp"
#include "seg2hoi/dataset.hpp"

using namespace seg2hoi;

namespace {

double brute_force_min(const Matrix& c) {
  std::vector<int> rows(static_cast<size_t>(c.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (Eigen::Index g = 0; g < c.cols(); ++g) s += c(rows[static_cast<size_t>(g)], g);
    best = std::min(best, s);
  } while (std::next_permutation(rows.begin(), rows.end()));
  return best;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("hungarian matches brute force on small matrices") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 200; ++t) {
    const int cols = 1 + static_cast<int>(rng() % 5);
    const int rows = cols + static_cast<int>(rng() % 3);
    Matrix c(rows, cols);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = (t % 3 == 0) ? std::round(u(rng)) : u(rng);
    const Assignment a = hungarian(c);
    REQUIRE(a.pairs.size() == static_cast<size_t>(cols));
    std::vector<bool> used(static_cast<size_t>(rows), false);
    for (size_t g = 0; g < a.pairs.size(); ++g) {
      CHECK(a.pairs[g].second == static_cast<int>(g));
      CHECK_FALSE(used[static_cast<size_t>(a.pairs[g].first)]);
      used[static_cast<size_t>(a.pairs[g].first)] = true;
    }
    CHECK(a.unmatched.size() == static_cast<size_t>(rows - cols));
    CHECK(std::is_sorted(a.unmatched.begin(), a.unmatched.end()));
    CHECK(assignment_cost(c, a) == doctest::Approx(brute_force_min(c)).epsilon(1e-12));
  }
}

TEST_CASE("hungarian rejects bad input") {
  CHECK_THROWS_AS(hungarian(Matrix::Zero(2, 3)), std::invalid_argument);
  Matrix c = Matrix::Zero(2, 2);
  c(0, 1) = std::nan("");
  CHECK_THROWS_AS(hungarian(c), std::invalid_argument);
  CHECK(hungarian(Matrix::Zero(3, 0)).unmatched.size() == 3);
}

TEST_CASE("verb cost is the balanced focal-style probability score") {
  Eigen::RowVectorXd l(3);
  l << 2.0, -1.0, 0.5;
  const std::vector<bool> t{true, false, false};
  const double expect = -(sigmoid(2.0) / (1 + 1e-4) + ((1 - sigmoid(-1.0)) + (1 - sigmoid(0.5))) / (2 + 1e-4)) / 2;
  CHECK(verb_cost(l, t) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mask cost is mean BCE plus smoothed dice") {
  Eigen::RowVectorXd l(4);
  l << 3.0, -3.0, 0.0, 1.0;
  BinaryMask m(2, 2);
  m.set_cell(0, true);
  m.set_cell(3, true);
  double ce = 0, inter = 0, ps = 0;
  for (int k = 0; k < 4; ++k) {
    const double p = sigmoid(l(k));
    const double y = m.cell(k) ? 1.0 : 0.0;
    ce += -(y * std::log(p) + (1 - y) * std::log(1 - p));
    inter += p * y;
    ps += p;
  }
  CHECK(mask_cost(l, m) == doctest::Approx(ce / 4 + 1 - (2 * inter + 1) / (ps + 2 + 1)).epsilon(1e-10));
  CHECK_THROWS_AS(mask_cost(l, BinaryMask(3, 3)), std::invalid_argument);
}

TEST_CASE("pair cost prefers the prediction that matches the GT") {
  GroundTruthHOI g;
  g.human_box = Box::from_corners(0.1, 0.1, 0.4, 0.9);
  g.object_box = Box::from_corners(0.5, 0.4, 0.7, 0.6);
  g.object_class = 1;
  g.verbs = {false, true};
  PredictionRow good;
  good.verb_logits = Eigen::RowVectorXd::Constant(2, -4.0);
  good.verb_logits(1) = 4.0;
  good.class_logits = Eigen::RowVectorXd::Zero(4);
  good.class_logits(1) = 5.0;
  good.human_row = true;
  good.own_box = g.human_box;
  good.counterpart_box = g.object_box;
  PredictionRow bad = good;
  bad.counterpart_box = Box::from_corners(0.8, 0.8, 0.95, 0.95);
  const CostWeights w;
  CHECK(pair_cost(good, g, w) < pair_cost(bad, g, w));
  PredictionRow swapped = good;
  swapped.human_row = false;
  swapped.own_box = g.object_box;
  swapped.counterpart_box = g.human_box;
  CHECK(pair_cost(swapped, g, w) == doctest::Approx(pair_cost(good, g, w)));
  const double box_part = pair_cost(bad, g, w) - pair_cost(good, g, w);
  const double l1 = box_l1(bad.counterpart_box, g.object_box);
  const double gi = 1 - giou(bad.counterpart_box, g.object_box);
  CHECK(box_part == doctest::Approx(5 * l1 + 2 * gi));
}

TEST_CASE("giou_rows matches scalar giou") {
  ag::Tape tape;
  Matrix pred(3, 4), target(3, 4);
  const Box a[3] = {{0.3, 0.3, 0.2, 0.2}, {0.5, 0.5, 0.4, 0.1}, {0.2, 0.8, 0.1, 0.1}};
  const Box b[3] = {{0.35, 0.3, 0.2, 0.3}, {0.5, 0.5, 0.4, 0.1}, {0.8, 0.2, 0.2, 0.2}};
  for (int i = 0; i < 3; ++i) {
    pred.row(i) << a[i].cx, a[i].cy, a[i].w, a[i].h;
    target.row(i) << b[i].cx, b[i].cy, b[i].w, b[i].h;
  }
  const ag::Var g = giou_rows(tape.constant(pred), target);
  for (int i = 0; i < 3; ++i) CHECK(g.value()(i, 0) == doctest::Approx(giou(a[i], b[i])).epsilon(1e-12));
}

TEST_CASE("matching never uses invalid rows and the loss is finite") {
  static const ToyFoundation model;
  const HoiDataset d = synth_dataset(2, 1);
  const FoundationOutput f = model.extract(toy::render(*d.images[0].scene));
  auto gts = ground_truth_pairs(d.images[0], d.categories);
  for (auto& g : gts) g.pseudo = generate_pseudo_label(f, g.human_box, g.object_box, {});
  DecoderConfig c;
  c.layers = 2;
  c.object_queries = 6;
  c.num_objects = static_cast<int>(d.categories.objects.size());
  c.num_verbs = static_cast<int>(d.categories.verbs.size());
  c.classifier = ClassifierMode::Linear;
  const HoiDecoder dec(c);
  const QueryAlignment al = dec.align(f);
  const auto own = own_boxes(f, al);
  const HeadOutputs h = dec.infer(f, al);
  std::vector<bool> valid(static_cast<size_t>(al.rows()));
  for (int r = 0; r < al.rows(); ++r) valid[static_cast<size_t>(r)] = al.valid(r);
  const Assignment a = match(h, own, valid, gts, CostWeights{});
  for (const auto& [p, g] : a.pairs) CHECK(valid[static_cast<size_t>(p)]);
  CHECK(a.pairs.size() + a.unmatched.size() == static_cast<size_t>(al.rows()));

  ag::Tape tape;
  nn::Binder bind(tape, dec.params());
  const auto layers = dec.forward(bind, f, al);
  std::mt19937_64 rng(1);
  const LossResult loss = compute_loss(layers, al, own, gts, CostWeights{}, LossWeights{},
                                       LossScale{static_cast<double>(gts.size()), 1}, rng);
  CHECK(loss.assignments.size() == 2);
  CHECK(std::isfinite(loss.total.scalar()));
  CHECK(loss.total.scalar() == doctest::Approx(loss.parts.total).epsilon(1e-9));
  CHECK(loss.parts.union_ce > 0);
  tape.backward(loss.total);
  for (const Matrix& g : bind.gradients()) CHECK(g.allFinite());

  ag::Tape tape2;
  nn::Binder bind2(tape2, dec.params());
  const auto empty = compute_loss(dec.forward(bind2, f, al), al, own, {}, CostWeights{}, LossWeights{}, {}, rng);
  CHECK(empty.parts.box == 0.0);
  CHECK(empty.parts.verb > 0.0);
  CHECK(empty.parts.cls > 0.0);
}
