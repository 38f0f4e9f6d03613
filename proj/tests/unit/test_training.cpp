#include <doctest.h>

#include <filesystem>
#include <algorithm>
#include <fstream>

#include "seg2hoi/predictor.hpp"
#include "seg2hoi/trainer.hpp"

using namespace seg2hoi;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c = parse_config(
      "data.synth_images = 4\n"
      "decoder.layers = 1\n"
      "decoder.object_queries = 4\n"
      "train.epochs = 2\n"
      "train.batch_size = 2\n"
      "train.lr = 0.001\n"
      "loss.mask_points = 64\n");
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seg2hoi-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  Checkpoint ckpt;
  std::vector<EpochMetrics> metrics;
};

Run train(const TrainConfig& cfg) {
  const HoiDataset d = load_dataset(cfg.data);
  const auto model = make_foundation(cfg);
  const auto samples = prepare_samples(d, *model, cfg);
  Trainer t(cfg, d.categories);
  Run r;
  r.metrics = t.fit(samples);
  r.ckpt = t.checkpoint(model->parameter_hash());
  return r;
}

}  // namespace

TEST_CASE("checkpoint serialization round trip") {
  const TrainConfig cfg = tiny_config();
  const auto cats = synth_categories();
  Checkpoint c{cfg, cats, "abc", 7, make_decoder(cfg, cats).params()};
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.config == cfg);
  CHECK(back.step == 7);
  CHECK(back.foundation_hash == "abc");
  CHECK(back.categories.verbs == cats.verbs);
  REQUIRE(back.params.size() == c.params.size());
  for (size_t i = 0; i < c.params.size(); ++i) {
    CHECK(back.params.entries()[i].name == c.params.entries()[i].name);
    CHECK(back.params.entries()[i].value == c.params.entries()[i].value);
    CHECK(back.params.entries()[i].trainable == c.params.entries()[i].trainable);
  }
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK_THROWS(deserialize_checkpoint(bytes + "x"));
  CHECK_THROWS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)));
  CHECK_THROWS(deserialize_checkpoint("garbage"));

  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint((dir / "a.ckpt").string(), c);
  CHECK(checkpoint_hash(load_checkpoint((dir / "a.ckpt").string())) == checkpoint_hash(c));
  CHECK_THROWS(load_checkpoint((dir / "missing.ckpt").string()));
}

TEST_CASE("restore_parameters checks names and shapes") {
  const TrainConfig cfg = tiny_config();
  const auto cats = synth_categories();
  nn::ParameterStore dst = make_decoder(cfg, cats).params();
  nn::ParameterStore src = dst;
  src.entries()[0].value.array() += 1.0;
  restore_parameters(dst, src);
  CHECK(dst.entries()[0].value == src.entries()[0].value);
  src.entries()[0].value.resize(1, 1);
  CHECK_THROWS(restore_parameters(dst, src));
  src = dst;
  src.entries()[1].name = "other";
  CHECK_THROWS(restore_parameters(dst, src));
}

TEST_CASE("zero epochs leave the initial weights") {
  TrainConfig cfg = tiny_config();
  cfg.train.epochs = 0;
  const Run r = train(cfg);
  const nn::ParameterStore init = make_decoder(cfg, synth_categories()).params();
  CHECK(r.metrics.empty());
  CHECK(r.ckpt.step == 0);
  for (size_t i = 0; i < init.size(); ++i) CHECK(r.ckpt.params.entries()[i].value == init.entries()[i].value);
}

TEST_CASE("training is reproducible and lowers the loss") {
  TrainConfig cfg = tiny_config();
  cfg.train.epochs = 6;
  const fs::path dir = scratch_dir("repro");
  cfg.train.log_path = (dir / "log.jsonl").string();
  cfg.data.cache_dir = (dir / "cache").string();
  const Run a = train(cfg);
  const Run b = train(cfg);
  CHECK(checkpoint_hash(a.ckpt) == checkpoint_hash(b.ckpt));
  CHECK(a.ckpt.step == 12);
  REQUIRE(a.metrics.size() == 6);
  CHECK(a.metrics.back().mean.total < a.metrics.front().mean.total);
  CHECK(fs::exists(dir / "cache"));
  std::ifstream log(cfg.train.log_path);
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    CHECK(nlohmann::json::parse(line).contains("lr"));
    ++lines;
  }
  CHECK(lines == 12);  // two runs appended

  TrainConfig other = cfg;
  other.train.seed = 1;
  CHECK(checkpoint_hash(train(other).ckpt) != checkpoint_hash(a.ckpt));
}

TEST_CASE("max_steps stops early") {
  TrainConfig cfg = tiny_config();
  cfg.train.max_steps = 3;
  cfg.train.epochs = 10;
  CHECK(train(cfg).ckpt.step == 3);
}

TEST_CASE("non-finite loss aborts with a snapshot") {
  TrainConfig cfg = tiny_config();
  const fs::path dir = scratch_dir("nan");
  cfg.train.checkpoint = (dir / "model.ckpt").string();
  const HoiDataset d = load_dataset(cfg.data);
  const auto model = make_foundation(cfg);
  const auto samples = prepare_samples(d, *model, cfg);
  Trainer t(cfg, d.categories);
  for (auto& e : t.decoder().params().entries()) {
    if (e.trainable) e.value.setConstant(std::nan(""));
  }
  CHECK_THROWS_AS(t.fit(samples), TrainingDiverged);
  CHECK(fs::exists(dir / "model.ckpt.diverged"));
  CHECK(fs::exists(dir / "model.ckpt.diverged.json"));
  CHECK_FALSE(fs::exists(dir / "model.ckpt"));
}

TEST_CASE("predictor from a checkpoint reproduces the trained decoder") {
  TrainConfig cfg = tiny_config();
  const Run r = train(cfg);
  const Predictor p(r.ckpt);
  CHECK(p.checkpoint_hash() == checkpoint_hash(r.ckpt));
  const HoiDecoder dec = [&] {
    HoiDecoder d = make_decoder(cfg, synth_categories());
    restore_parameters(d.params(), r.ckpt.params);
    return d;
  }();
  const Predictor q(cfg, synth_categories(), dec);
  const Image img = toy::render(*synth_dataset(0, 1).images[0].scene);
  const auto a = p.detect(img, 10), b = q.detect(img, 10);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == b[i].score);
  Checkpoint bad = r.ckpt;
  bad.foundation_hash = "0000";
  CHECK_THROWS(Predictor{bad});
  const auto report = evaluate_dataset(p, synth_dataset(0, 2), "");
  CHECK(report["images"] == 2);
  CHECK(report.contains("default"));
}

TEST_CASE("zero-shot training drops unseen classes and eval reports them") {
  TrainConfig cfg = parse_config("data.source = " + std::string(SEG2HOI_FIXTURES) +
                                 "/hico_fixture.json\ndata.zero_shot = rf-uc\n");
  const HoiDataset full = load_dataset(cfg.data);
  const auto split = zero_shot_split_for(cfg, full);
  REQUIRE(split);
  CHECK(split->unseen.size() == 120);
  const HoiDataset train = load_training_dataset(cfg);
  size_t kept = 0, total = 0;
  for (size_t i = 0; i < train.images.size(); ++i) {
    total += full.images[i].hois.size();
    kept += train.images[i].hois.size();
    for (const auto& h : train.images[i].hois) {
      const int hoi = train.categories.hoi_id(h.verb, train.images[i].boxes[static_cast<size_t>(h.object)].category);
      CHECK_FALSE(std::binary_search(split->unseen.begin(), split->unseen.end(), hoi));
    }
  }
  CHECK(kept < total);
  cfg.data.zero_shot = "none";
  CHECK_FALSE(zero_shot_split_for(cfg, full));

  const TrainConfig synth = tiny_config();
  CHECK(dump_annotations(load_test_dataset(synth)) == dump_annotations(synth_dataset(1, 4)));
}
