#include <doctest.h>

#include "seg2hoi/config.hpp"

using namespace seg2hoi;

TEST_CASE("defaults follow the reference schedule") {
  const TrainConfig c = parse_config("");
  CHECK(c.decoder.layers == 6);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.epochs == 70);
  CHECK(c.train.batch_size == 16);
  CHECK(c.loss.focal_alpha == 0.5);
  CHECK(c.loss.focal_gamma == 2.0);
  CHECK(c.eval.lambda == 0.5);
  CHECK(c.cost.verb == 5.0);
  CHECK(c.cost.mask_inter == 0.1);
  CHECK(c.loss.giou == 4.0);
}

TEST_CASE("lr_at divides once per passed drop") {
  ScheduleConfig s;
  CHECK(s.lr_at(0) == doctest::Approx(1e-4));
  CHECK(s.lr_at(49) == doctest::Approx(1e-4));
  CHECK(s.lr_at(50) == doctest::Approx(2e-5));
  CHECK(s.lr_at(60) == doctest::Approx(4e-6));
  CHECK(s.lr_at(69) == doctest::Approx(4e-6));
}

TEST_CASE("format_config parses back to the same config") {
  TrainConfig c = parse_config(
      "# desk run\n"
      "train.lr = 0.001\n"
      "train.lr_drops = 200, 235\n"
      "decoder.layers = 3   # fewer layers\n"
      "decoder.classifier = linear\n"
      "loss.union_masks = false\n"
      "data.source = annotations.json\n"
      "data.root = images dir\n");
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.lr_drops == std::vector<int>{200, 235});
  CHECK(c.decoder.classifier == ClassifierMode::Linear);
  CHECK_FALSE(c.loss.union_masks);
  CHECK(c.data.root == "images dir");
  const TrainConfig back = parse_config(format_config(c));
  CHECK(back == c);
  CHECK(format_config(back) == format_config(c));
  CHECK_FALSE(back == parse_config(""));
}

TEST_CASE("config errors") {
  CHECK_THROWS_WITH_AS(parse_config("train.learning_rate = 1"), doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("train.lr"), doctest::Contains("key = value"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("train.lr = fast"), doctest::Contains("expected a number"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("train.batch_size = 1.5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("loss.union_masks = maybe"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("eval.lambda = 2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("train.lr = 0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("data.format = coco"), std::invalid_argument);
  CHECK_THROWS_AS(load_config("/nonexistent.conf"), std::runtime_error);
}

TEST_CASE("zero-shot keys") {
  const TrainConfig c = parse_config("data.zero_shot = uo\ndata.unseen_objects = 0, 1, 2\n");
  CHECK(c.data.unseen_objects == std::vector<int>{0, 1, 2});
  CHECK(parse_config(format_config(c)) == c);
  CHECK_THROWS_AS(parse_config("data.zero_shot = uo\n"), std::invalid_argument);
  CHECK_THROWS(parse_config("data.zero_shot = half\n"));
  CHECK_THROWS_AS(parse_config("data.zero_shot = rf-uc\ndata.unseen_count = 0\n"), std::invalid_argument);
}
