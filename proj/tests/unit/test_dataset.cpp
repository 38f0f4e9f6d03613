#include <doctest.h>

#include <algorithm>

#include "seg2hoi/dataset.hpp"

using namespace seg2hoi;

namespace {

std::string fixture(const std::string& name) { return std::string(SEG2HOI_FIXTURES) + "/" + name; }

std::string expect_error(const std::string& text, DatasetFormat f) {
  try {
    parse_annotations(text, f);
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("HICO fixture loads the full category tables") {
  const HoiDataset d = load_annotations(fixture("hico_fixture.json"), DatasetFormat::Hico);
  CHECK(d.categories.objects.size() == 80);
  CHECK(d.categories.verbs.size() == 117);
  CHECK(d.categories.hoi_classes.size() == 600);
  CHECK(d.categories.verb_roles.empty());
  const auto counts = d.hoi_instance_counts();
  CHECK(counts.size() == 600);
  int rare = 0;
  for (int c : counts) rare += c < 10;
  CHECK(rare == 138);
}

TEST_CASE("V-COCO fixture has 29 verbs with roles") {
  const HoiDataset d = load_annotations(fixture("vcoco_fixture.json"), DatasetFormat::Vcoco);
  CHECK(d.categories.verbs.size() == 29);
  CHECK(d.categories.verb_roles.size() == 29);
  CHECK(d.categories.hoi_classes.size() == 29 * d.categories.objects.size());
  bool any_none = false;
  for (const auto& img : d.images) {
    for (const auto& h : img.hois) any_none = any_none || h.object == -1;
  }
  CHECK(any_none);
  for (const auto& img : d.images) {
    for (const auto& g : ground_truth_pairs(img, d.categories)) CHECK(g.object_class >= 0);
  }
}

TEST_CASE("minimal fixture yields one GT pair") {
  const HoiDataset d = load_annotations(fixture("minimal.json"), DatasetFormat::Hico);
  REQUIRE(d.images.size() == 1);
  const auto gts = ground_truth_pairs(d.images[0], d.categories);
  REQUIRE(gts.size() == 1);
  const Corners h = gts[0].human_box.corners();
  CHECK(h.x_min == doctest::Approx(8.0 / 64));
  CHECK(h.y_max == doctest::Approx(56.0 / 64));
  CHECK(std::count(gts[0].verbs.begin(), gts[0].verbs.end(), true) == 1);
}

TEST_CASE("annotation round trip through dump") {
  const HoiDataset d = load_annotations(fixture("minimal.json"), DatasetFormat::Hico);
  const HoiDataset e = parse_annotations(dump_annotations(d), DatasetFormat::Hico);
  CHECK(e.images.size() == d.images.size());
  CHECK(e.categories.hoi_classes.size() == d.categories.hoi_classes.size());
  CHECK(dump_annotations(e) == dump_annotations(d));
}

TEST_CASE("malformed annotations name every offending record") {
  CHECK(expect_error("not json", DatasetFormat::Hico).find("not valid JSON") != std::string::npos);
  const std::string text = R"({"objects":["cup"],"verbs":["hold"],"hoi_classes":[{"verb":0,"object":0},{"verb":3,"object":0}],
    "images":[{"file_name":"a.png","width":10,"height":10,
      "annotations":[{"bbox":[0,0,5,5],"category_id":-1},{"bbox":[1,1,4,4],"category_id":0},{"bbox":[0,0,20,5],"category_id":0}],
      "hoi_annotation":[{"subject_id":0,"object_id":1,"category_id":0},{"subject_id":9,"object_id":1,"category_id":0},
                        {"subject_id":0,"object_id":-1,"category_id":0}]}]})";
  const std::string err = expect_error(text, DatasetFormat::Hico);
  CHECK(err.find("hoi_classes[1]") != std::string::npos);
  CHECK(err.find(".annotations[2]") != std::string::npos);
  CHECK(err.find("hoi_annotation[1]") != std::string::npos);
  CHECK(err.find("hoi_annotation[2]") != std::string::npos);
  CHECK(err.find("hoi_annotation[0]") == std::string::npos);
  CHECK_THROWS_AS(load_annotations("/nonexistent.json", DatasetFormat::Hico), std::runtime_error);
  CHECK_THROWS_AS(dataset_format_from_string("coco"), std::invalid_argument);
}

TEST_CASE("synth dataset is deterministic and scripted") {
  const HoiDataset a = synth_dataset(3, 12), b = synth_dataset(3, 12);
  CHECK(dump_annotations(a) == dump_annotations(b));
  CHECK(dump_annotations(a) != dump_annotations(synth_dataset(4, 12)));
  for (const auto& rec : a.images) {
    REQUIRE(rec.scene);
    CHECK(rec.boxes[0].category == -1);
    CHECK_FALSE(rec.hois.empty());
    const auto& shapes = rec.scene->shapes;
    for (size_t k = 1; k < shapes.size(); ++k) {
      const auto verbs = scripted_verbs(shapes[0], shapes[k], rec.width, rec.height);
      for (int v = 0; v < 3; ++v) {
        bool annotated = false;
        for (const auto& h : rec.hois) annotated = annotated || (h.object == static_cast<int>(k) && h.verb == v);
        CHECK(annotated == verbs[static_cast<size_t>(v)]);
      }
    }
  }
  CHECK_THROWS_AS(synth_dataset(0, 0), std::invalid_argument);
}

TEST_CASE("scripted verbs follow the geometry") {
  const toy::Shape human{toy::ShapeKind::Disk, 0, 32, 40, 8, 8};
  toy::Shape cup{toy::ShapeKind::Rectangle, 1, 32, 40, 3, 3};
  CHECK(scripted_verbs(human, cup, 64, 64) == std::vector<bool>{true, false, false});
  cup.cy = 40 - 8 - 3 - 3;
  CHECK(scripted_verbs(human, cup, 64, 64) == std::vector<bool>{false, true, true});
  cup.cy = 8;
  CHECK(scripted_verbs(human, cup, 64, 64) == std::vector<bool>{false, false, true});
  cup.cx = 60;
  cup.cy = 40;
  CHECK(scripted_verbs(human, cup, 64, 64) == std::vector<bool>{false, false, false});
}

TEST_CASE("ground truth pairs merge verbs of the same pair") {
  ImageRecord r;
  r.width = r.height = 10;
  r.boxes = {{Box{0.3, 0.3, 0.2, 0.2}, -1}, {Box{0.6, 0.6, 0.2, 0.2}, 1}};
  r.hois = {{0, 1, 0}, {0, 1, 2}, {0, 1, 0}};
  const auto gts = ground_truth_pairs(r, synth_categories());
  REQUIRE(gts.size() == 1);
  CHECK(gts[0].verbs == std::vector<bool>{true, false, true});
  CHECK(gts[0].object_class == 1);
}
