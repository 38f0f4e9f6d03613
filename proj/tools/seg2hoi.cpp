#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "seg2hoi/checkpoint.hpp"
#include "seg2hoi/config.hpp"
#include "seg2hoi/predictor.hpp"
#include "seg2hoi/service.hpp"
#include "seg2hoi/trainer.hpp"

using namespace seg2hoi;

namespace {

int run_cache(const std::string& config_path) {
  TrainConfig cfg = load_config(config_path);
  if (cfg.data.cache_dir.empty()) throw std::runtime_error("data.cache_dir is not set in " + config_path);
  const HoiDataset d = load_dataset(cfg.data);
  const auto foundation = make_foundation(cfg);
  const auto samples = prepare_samples(d, *foundation, cfg);
  int pseudo = 0, total = 0;
  for (const auto& s : samples) {
    for (const auto& g : s.gts) {
      ++total;
      pseudo += g.pseudo ? 1 : 0;
    }
  }
  std::cout << "cached " << samples.size() << " images into " << cfg.data.cache_dir << "; pseudo-labels for " << pseudo
            << "/" << total << " pairs\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& checkpoint_override) {
  TrainConfig cfg = load_config(config_path);
  if (!checkpoint_override.empty()) cfg.train.checkpoint = checkpoint_override;
  const HoiDataset d = load_training_dataset(cfg);
  const auto foundation = make_foundation(cfg);
  const std::string hash_before = foundation->parameter_hash();
  const auto samples = prepare_samples(d, *foundation, cfg);
  Trainer trainer(cfg, d.categories);
  trainer.fit(samples, [](const EpochMetrics& m) { std::cout << epoch_metrics_json(m) << "\n" << std::flush; });
  const std::string hash_after = foundation->parameter_hash();
  if (hash_after != hash_before) throw std::runtime_error("foundation parameters changed during training");
  const Checkpoint ckpt = trainer.checkpoint(hash_after);
  save_checkpoint(cfg.train.checkpoint, ckpt);
  std::cout << "wrote " << cfg.train.checkpoint << " (" << trainer.steps() << " steps, sha256 " << checkpoint_hash(ckpt)
            << ")\n";
  return 0;
}

int run_eval(const std::string& config_path, const std::string& checkpoint, const std::string& out,
             const std::string& dump) {
  const TrainConfig cfg = load_config(config_path);
  const Predictor p = Predictor::load(checkpoint);
  const HoiDataset train = load_dataset(cfg.data);
  EvalSplits splits;
  splits.train_counts = train.hoi_instance_counts();
  splits.zero_shot = zero_shot_split_for(cfg, train);
  splits.zero_shot_name = cfg.data.zero_shot;
  const HoiDataset d = load_test_dataset(cfg);
  std::vector<nlohmann::json> dumps;
  const nlohmann::json report =
      evaluate_dataset(p, d, test_image_root(cfg), dump.empty() ? nullptr : &dumps, splits);
  if (!dump.empty()) {
    std::ofstream f(dump);
    for (const auto& j : dumps) f << j.dump() << "\n";
  }
  if (out.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::ofstream(out) << report.dump(2) << "\n";
  }
  return 0;
}

int run_infer(const std::string& image_path, const std::string& checkpoint, const std::string& out, int top_k) {
  const Predictor p = Predictor::load(checkpoint);
  const Image img = read_png(image_path);
  const auto qs = p.detect(img, top_k > 0 ? top_k : p.config().eval.top_k);
  const nlohmann::json j =
      prediction_dump(std::filesystem::path(image_path).filename().string(), qs, p.categories(), img.width, img.height);
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream(out) << j.dump(2) << "\n";
  }
  return 0;
}

int run_serve(const std::string& checkpoint, const std::string& host, int port) {
  auto p = std::make_shared<const Predictor>(Predictor::load(checkpoint));
  Service service(p);
  std::cout << "serving on http://" << host << ":" << port << "\n" << std::flush;
  service.serve(host, port);
  return 0;
}

int run_synth(std::uint64_t seed, int images, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  HoiDataset d = synth_dataset(seed, images);
  for (auto& rec : d.images) {
    write_png((fs::path(out_dir) / rec.file_name).string(), toy::render(*rec.scene));
  }
  std::ofstream(fs::path(out_dir) / "annotations.json") << dump_annotations(d) << "\n";
  std::cout << "wrote " << images << " images and annotations.json to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seg2hoi: HOI detection on top of a frozen segmentation model"};
  app.require_subcommand(1);

  std::string config, checkpoint, out, dump, image, host = "127.0.0.1";
  int port = 8080, top_k = 0, images = 32;
  std::uint64_t seed = 0;

  auto* cache = app.add_subcommand("cache", "Extract and cache foundation outputs for the configured dataset");
  cache->add_option("--config,-c", config, "Config file")->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Train the HOI decoder");
  train->add_option("--config,-c", config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--checkpoint", checkpoint, "Output checkpoint (overrides train.checkpoint)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the configured dataset");
  eval->add_option("--config,-c", config, "Config file")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Report JSON path (stdout when omitted)");
  eval->add_option("--dump", dump, "Write per-image predictions as JSON lines");

  auto* infer = app.add_subcommand("infer", "Detect quadruplets in one PNG image");
  infer->add_option("--image", image, "PNG image")->required()->check(CLI::ExistingFile);
  infer->add_option("--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out, "Output JSON path ('-' for stdout)");
  infer->add_option("--top-k", top_k, "Maximum quadruplets");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", host, "Bind address");

  auto* synth = app.add_subcommand("synth", "Write generated toy scenes as PNGs plus annotations.json");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--images", images, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*cache) return run_cache(config);
    if (*train) return run_train(config, checkpoint);
    if (*eval) return run_eval(config, checkpoint, out, dump);
    if (*infer) return run_infer(image, checkpoint, out, top_k);
    if (*serve) return run_serve(checkpoint, host, port);
    if (*synth) return run_synth(seed, images, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
