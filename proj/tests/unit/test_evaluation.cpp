#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "seg2hoi/evaluation.hpp"

using namespace seg2hoi;

namespace {

HoiCategories two_class_table() {
  HoiCategories c;
  c.objects = {"cup", "kite"};
  c.verbs = {"hold", "fly"};
  c.hoi_classes = {{0, 0}, {1, 1}};
  return c;
}

const Box kHuman = Box::from_corners(0.1, 0.1, 0.4, 0.9);
const Box kCup = Box::from_corners(0.5, 0.5, 0.7, 0.7);

}  // namespace

TEST_CASE("hoi score closed form") {
  Eigen::RowVectorXd p(3);
  p << 0.64, 0.16, 0.2;
  CHECK(hoi_score(p, 0.0, 0.5) == doctest::Approx(0.4));
  Eigen::RowVectorXd q(3);
  q << 0.1, 0.05, 0.85;
  CHECK(hoi_score(q, 0.0, 0.0) == doctest::Approx(0.5));
  CHECK(hoi_score(p, 0.0, 0.0) == doctest::Approx(0.5));
  CHECK(class_probabilities(Eigen::RowVectorXd::Zero(4)).sum() == doctest::Approx(1.0));
}

TEST_CASE("assemble follows branch conventions and top_k") {
  static const ToyFoundation model;
  const HoiDataset d = synth_dataset(1, 1);
  const FoundationOutput f = model.extract(toy::render(*d.images[0].scene));
  DecoderConfig c;
  c.layers = 1;
  c.object_queries = 4;
  c.num_objects = 3;
  c.num_verbs = 3;
  c.classifier = ClassifierMode::Linear;
  const HoiDecoder dec(c);
  const QueryAlignment a = dec.align(f);
  HeadOutputs h = dec.infer(f, a);
  REQUIRE(a.valid(0));
  const int human_row = a.object_rows();
  REQUIRE(a.valid(human_row));
  h.class_logits.setConstant(-10.0);
  h.class_logits.col(3).setConstant(10.0);
  h.verb_logits.setConstant(-10.0);
  h.class_logits(0, 1) = 10.0;
  h.class_logits(0, 3) = 0.0;
  h.verb_logits(0, 2) = 3.0;
  h.class_logits(human_row, 2) = 10.0;
  h.class_logits(human_row, 3) = 0.0;
  h.verb_logits(human_row, 0) = -2.0;
  h.boxes.row(0) << 0.2, 0.2, 0.1, 0.1;
  h.boxes.row(human_row) << 0.7, 0.7, 0.2, 0.2;

  const auto all = assemble(f, a, h, {0.5, 100, 0.01});
  REQUIRE(all.size() == 2);
  CHECK(all[0].query == 0);
  CHECK(all[0].object_class == 1);
  CHECK(all[0].verb == 2);
  CHECK(all[0].human_box.cx == doctest::Approx(0.2));
  CHECK(all[0].object_box.cx == doctest::Approx(f.boxes[static_cast<size_t>(a.source(0))].cx));
  CHECK(all[1].query == human_row);
  CHECK(all[1].human_box.cx == doctest::Approx(f.boxes[static_cast<size_t>(a.source(human_row))].cx));
  CHECK(all[1].object_box.cx == doctest::Approx(0.7));
  CHECK(all[0].score > all[1].score);
  const auto one = assemble(f, a, h, {0.5, 1, 0.0});
  REQUIRE(one.size() == 1);
  CHECK(one[0].query == 0);
  CHECK(one[0].union_mask.height() == f.grid_height);
}

TEST_CASE("average precision of simple rankings") {
  CHECK(average_precision({true}, 1) == doctest::Approx(1.0));
  CHECK(average_precision({false, true}, 1) == doctest::Approx(0.5));
  CHECK(average_precision({true, false, true}, 2) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
  CHECK(average_precision({true}, 2) == doctest::Approx(0.5));
  CHECK(average_precision({}, 0) == 0.0);
}

TEST_CASE("hico_map one exact prediction and one poor human box") {
  const auto cats = two_class_table();
  const std::vector<HoiGroundTruth> gts{{0, 0, kHuman, kCup}};
  const std::vector<bool> rare{false, true};
  const auto exact = hico_map({{0, 0, kHuman, kCup, 0.9}}, gts, cats, rare);
  REQUIRE(exact.per_class[0]);
  CHECK(*exact.per_class[0] == doctest::Approx(1.0));
  CHECK_FALSE(exact.per_class[1]);
  CHECK(exact.full == doctest::Approx(1.0));
  CHECK(exact.nonrare == doctest::Approx(1.0));
  CHECK(exact.rare == 0.0);
  // same size, shifted so the overlap width w satisfies w / (0.6 - w) = 0.4
  const double dx = 0.3 - 0.24 / 1.4;
  const Box shifted{kHuman.cx + dx, kHuman.cy, kHuman.w, kHuman.h};
  CHECK(iou(shifted, kHuman) == doctest::Approx(0.4));
  const auto miss = hico_map({{0, 0, shifted, kCup, 0.9}}, gts, cats, rare);
  CHECK(*miss.per_class[0] == 0.0);
}

TEST_CASE("duplicate detections of one GT count once") {
  const auto cats = two_class_table();
  const auto r = hico_map({{0, 0, kHuman, kCup, 0.9}, {0, 0, kHuman, kCup, 0.8}}, {{0, 0, kHuman, kCup}}, cats,
                          {false, false});
  CHECK(*r.per_class[0] == doctest::Approx(1.0));
}

TEST_CASE("known-object mode ignores images without the object") {
  const auto cats = two_class_table();
  const std::vector<HoiGroundTruth> gts{{0, 0, kHuman, kCup}, {1, 1, kHuman, kCup}};
  const std::vector<HoiDetection> dets{{1, 0, kHuman, kCup, 0.95}, {0, 0, kHuman, kCup, 0.5}};
  const auto def = hico_map(dets, gts, cats, {false, false});
  const auto known = hico_map(dets, gts, cats, {false, false}, HicoMode::KnownObject);
  CHECK(*def.per_class[0] == doctest::Approx(0.5));
  CHECK(*known.per_class[0] == doctest::Approx(1.0));
}

TEST_CASE("role AP scenarios for a GT without an object") {
  HoiCategories cats;
  cats.objects = {"ball"};
  cats.verbs = {"kick", "stand"};
  cats.verb_roles = {"obj", "none"};
  const std::vector<RoleGroundTruth> gts{{0, 0, kHuman, std::nullopt}};
  const std::vector<RoleDetection> with_box{{0, 0, kHuman, kCup, 0.9}};
  CHECK(*vcoco_role_ap(with_box, gts, cats, RoleScenario::S2).per_verb[0] == doctest::Approx(1.0));
  CHECK(*vcoco_role_ap(with_box, gts, cats, RoleScenario::S1).per_verb[0] == 0.0);
  const std::vector<RoleDetection> without{{0, 0, kHuman, std::nullopt, 0.9}};
  CHECK(*vcoco_role_ap(without, gts, cats, RoleScenario::S1).per_verb[0] == doctest::Approx(1.0));
  const auto r = vcoco_role_ap(without, {{0, 1, kHuman, std::nullopt}}, cats, RoleScenario::S1);
  CHECK_FALSE(r.per_verb[1]);
}

TEST_CASE("zero-shot splits on the HICO fixture") {
  const HoiDataset d = load_annotations(std::string(SEG2HOI_FIXTURES) + "/hico_fixture.json", DatasetFormat::Hico);
  const auto counts = d.hoi_instance_counts();
  const auto rf = zero_shot_split(d.categories, counts, ZeroShotType::RareFirst);
  CHECK(rf.unseen.size() == 120);
  CHECK(rf.seen.size() == 480);
  int min_unseen = 1 << 30, max_unseen = 0, min_seen = 1 << 30;
  for (int u : rf.unseen) max_unseen = std::max(max_unseen, counts[static_cast<size_t>(u)]);
  for (int s : rf.seen) min_seen = std::min(min_seen, counts[static_cast<size_t>(s)]);
  CHECK(max_unseen <= min_seen);
  const auto nf = zero_shot_split(d.categories, counts, ZeroShotType::NonRareFirst);
  CHECK(nf.unseen.size() == 120);
  for (int u : nf.unseen) min_unseen = std::min(min_unseen, counts[static_cast<size_t>(u)]);
  for (int s : nf.seen) CHECK(counts[static_cast<size_t>(s)] <= min_unseen);
  std::vector<int> twelve(12);
  std::iota(twelve.begin(), twelve.end(), 0);
  const auto uo = zero_shot_split(d.categories, counts, ZeroShotType::UnseenObject, twelve);
  CHECK(uo.unseen.size() == 100);
  CHECK(uo.seen.size() == 500);
  const HoiDataset filtered = filter_unseen(d, rf);
  for (const auto& img : filtered.images) {
    for (const auto& h : img.hois) {
      const int hoi = filtered.categories.hoi_id(h.verb, img.boxes[static_cast<size_t>(h.object)].category);
      CHECK_FALSE(std::binary_search(rf.unseen.begin(), rf.unseen.end(), hoi));
    }
  }
  CHECK(zero_shot_type_from_string(to_string(ZeroShotType::UnseenObject)) == ZeroShotType::UnseenObject);
  CHECK_THROWS(zero_shot_type_from_string("zs"));
}

TEST_CASE("rare classes use the ten-instance threshold") {
  CHECK(rare_classes({9, 10, 0, 11}) == std::vector<bool>{true, false, true, false});
}

TEST_CASE("quadruplet JSON carries pixel boxes and RLE masks") {
  Quadruplet q;
  q.human_box = Box::from_corners(0.0, 0.25, 0.5, 1.0);
  q.object_box = kCup;
  q.object_class = 1;
  q.verb = 1;
  q.score = 0.75;
  q.union_mask = BinaryMask(2, 2);
  q.union_mask.set(1, 1);
  const auto j = quadruplet_json(q, two_class_table(), 64, 32);
  CHECK(j["human_box"] == nlohmann::json::array({0.0, 8.0, 32.0, 32.0}));
  CHECK(j["object_class"]["name"] == "kite");
  CHECK(j["verb"]["name"] == "fly");
  CHECK(j["intersection_mask"].is_null());
  CHECK(decode_rle(rle_from_json(j["union_mask"])) == q.union_mask);
  CHECK(rle_json(rle_from_json(j["union_mask"])).dump() == j["union_mask"].dump());
}
