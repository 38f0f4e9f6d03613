#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seg2hoi/criterion.hpp"
#include "seg2hoi/decoder.hpp"
#include "seg2hoi/foundation.hpp"
#include "seg2hoi/pseudolabel.hpp"

namespace seg2hoi {

struct DataConfig {
  std::string source = "synth";  // "synth" or an annotation JSON path
  std::string format = "hico";
  std::string root;              // image directory for annotation files
  std::uint64_t synth_seed = 0;
  int synth_images = 32;
  std::string cache_dir;
  /// "none", "rf-uc", "nf-uc" or "uo": drop unseen HOI classes from training.
  std::string zero_shot = "none";
  std::vector<int> unseen_objects;  // object ids held out by "uo"
  int unseen_count = 120;           // classes held out by "rf-uc" / "nf-uc"
};

struct ScheduleConfig {
  int epochs = 70;
  int max_steps = 0;  // 0: run every epoch
  double lr = 1e-4;
  std::vector<int> lr_drops{50, 60};
  double lr_drop_factor = 5.0;
  int batch_size = 16;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  std::string log_path;
  std::string checkpoint = "seg2hoi.ckpt";

  /// Piecewise-constant learning rate: divided by the factor once per passed drop.
  double lr_at(int epoch) const;
};

struct EvalConfig {
  /// Test annotations; empty means data.source. Synth test scenes come from
  /// synth_dataset(eval.synth_seed, data.synth_images).
  std::string source;
  std::string root;
  std::uint64_t synth_seed = 1;
  double lambda = 0.5;
  int top_k = 100;
  double score_floor = 0.0;
};

struct TrainConfig {
  DataConfig data;
  ToyFoundationConfig foundation;
  DecoderConfig decoder;
  ScheduleConfig train;
  PseudoLabelParams pseudo;
  CostWeights cost;
  LossWeights loss;
  EvalConfig eval;
  std::uint64_t embedder_seed = 11;

  void validate() const;
};

/// Flat `dotted.key = value` text; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
/// Every key, in a fixed order, with values that parse back to the same config.
std::string format_config(const TrainConfig& c);
bool operator==(const TrainConfig& a, const TrainConfig& b);

}  // namespace seg2hoi
