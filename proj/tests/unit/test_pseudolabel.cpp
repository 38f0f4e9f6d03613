#include <doctest.h>

#include <random>

#include "seg2hoi/dataset.hpp"
#include "seg2hoi/pseudolabel.hpp"

using namespace seg2hoi;

namespace {

BinaryMask rect_mask(int h, int w, int r0, int c0, int r1, int c1) {
  BinaryMask m(h, w);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) m.set(r, c);
  }
  return m;
}

}  // namespace

TEST_CASE("match_instance picks the exact box with cost zero") {
  const Box gt = Box::from_corners(0.1, 0.1, 0.4, 0.5);
  CHECK(*match_instance(gt, {gt}, 5, 2) == 0);
  CHECK(*match_instance(gt, {Box::from_corners(0.6, 0.6, 0.9, 0.9), gt}, 5, 2) == 1);
  CHECK(*match_instance(gt, {Box::from_corners(0.6, 0.6, 0.9, 0.9), gt, gt}, 5, 2) == 1);
  CHECK_FALSE(match_instance(gt, {}, 5, 2));
}

TEST_CASE("match_instance equals a linear scan") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  auto box = [&] {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    return Box::from_corners(std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d));
  };
  for (int t = 0; t < 100; ++t) {
    const Box gt = box();
    std::vector<Box> cands;
    for (int i = 0; i < 10; ++i) cands.push_back(box());
    size_t best = 0;
    double best_cost = 1e300;
    for (size_t i = 0; i < cands.size(); ++i) {
      const double c = 5 * box_l1(gt, cands[i]) + 2 * (1 - giou(gt, cands[i]));
      if (c < best_cost) {
        best_cost = c;
        best = i;
      }
    }
    CHECK(*match_instance(gt, cands, 5, 2) == best);
  }
}

TEST_CASE("identical masks give an intersection equal to the mask") {
  const BinaryMask m = rect_mask(16, 16, 3, 4, 8, 10);
  const auto p = build_pseudo_label(m, m, 0.1);
  REQUIRE(p);
  CHECK(p->union_mask == m);
  REQUIRE(p->intersection_mask);
  CHECK(*p->intersection_mask == m);
  CHECK(p->intersection_box->w == doctest::Approx(expand_box(*mask_to_box(m), 0.1).w));
}

TEST_CASE("masks in opposite corners have no intersection") {
  const auto p = build_pseudo_label(rect_mask(16, 16, 0, 0, 2, 2), rect_mask(16, 16, 13, 13, 15, 15), 0.05);
  REQUIRE(p);
  CHECK_FALSE(p->intersection_box);
  CHECK_FALSE(p->intersection_mask);
  CHECK(p->union_mask.area() == 18);
}

TEST_CASE("overlapping L shapes: intersection is the union cropped cell by cell") {
  BinaryMask h = mask_union(rect_mask(16, 16, 2, 2, 12, 4), rect_mask(16, 16, 10, 2, 12, 9));
  BinaryMask o = mask_union(rect_mask(16, 16, 5, 7, 14, 9), rect_mask(16, 16, 5, 7, 6, 14));
  const auto p = build_pseudo_label(h, o, 0.0);
  REQUIRE(p);
  REQUIRE(p->intersection_box);
  const BinaryMask raster = rasterize_box(*p->intersection_box, 16, 16);
  for (int i = 0; i < 256; ++i) {
    CHECK(p->intersection_mask->cell(i) == (p->union_mask.cell(i) && raster.cell(i)));
  }
}

TEST_CASE("empty masks are unmatchable") {
  CHECK_FALSE(build_pseudo_label(BinaryMask(8, 8), rect_mask(8, 8, 0, 0, 1, 1), 0.1));
}

TEST_CASE("synth pairs get pseudo-labels from the toy foundation") {
  const ToyFoundation model;
  const HoiDataset d = synth_dataset(4, 8);
  int labelled = 0, total = 0;
  for (const auto& rec : d.images) {
    const FoundationOutput f = model.extract(toy::render(*rec.scene));
    for (const auto& g : ground_truth_pairs(rec, d.categories)) {
      ++total;
      const auto p = generate_pseudo_label(f, g.human_box, g.object_box, {});
      if (!p) continue;
      ++labelled;
      CHECK(f.predicted_class(p->human_query) == f.human_class);
      CHECK(is_subset(f.instance_mask(p->human_query), p->union_mask));
      CHECK(is_subset(f.instance_mask(p->object_query), p->union_mask));
    }
  }
  CHECK(labelled == total);
}
