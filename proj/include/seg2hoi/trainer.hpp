#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "seg2hoi/checkpoint.hpp"
#include "seg2hoi/config.hpp"
#include "seg2hoi/dataset.hpp"
#include "seg2hoi/decoder.hpp"
#include "seg2hoi/evaluation.hpp"
#include "seg2hoi/openvocab.hpp"

namespace seg2hoi {

/// Synth scenes or an annotation file, as selected by the data section.
HoiDataset load_dataset(const DataConfig& data);
/// Split selected by data.zero_shot, built from the training counts; nullopt for "none".
std::optional<ZeroShotSplit> zero_shot_split_for(const TrainConfig& cfg, const HoiDataset& train);
/// load_dataset with unseen HOI annotations removed when a zero-shot split is configured.
HoiDataset load_training_dataset(const TrainConfig& cfg);
/// eval.source, or the synth test split, or the training source.
HoiDataset load_test_dataset(const TrainConfig& cfg);
std::string test_image_root(const TrainConfig& cfg);
std::unique_ptr<ToyFoundation> make_foundation(const TrainConfig& cfg);
ToyEmbedder make_embedder(const TrainConfig& cfg, const HoiCategories& cats);
/// Decoder sized for the category table; text mode gets the templated bank.
HoiDecoder make_decoder(const TrainConfig& cfg, const HoiCategories& cats);

/// build_samples with an optional on-disk FoundationOutput cache keyed by the
/// foundation hash and image name.
std::vector<TrainingSample> prepare_samples(const HoiDataset& d, const FoundationModel& model,
                                            const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;  // optimizer steps completed so far
  double lr = 0.0;
  int batches = 0;
  LossBreakdown mean;  // per-batch average
  double seconds = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, HoiCategories cats);

  const TrainConfig& config() const { return cfg_; }
  const HoiCategories& categories() const { return cats_; }
  HoiDecoder& decoder() { return decoder_; }
  const HoiDecoder& decoder() const { return decoder_; }
  std::int64_t steps() const { return optimizer_.steps(); }
  const std::vector<double>& step_losses() const { return step_losses_; }

  /// One AdamW update on the summed batch loss. Throws TrainingDiverged (after
  /// writing a snapshot next to the checkpoint path) on a non-finite loss or gradient.
  LossBreakdown step(const std::vector<const TrainingSample*>& batch, double lr, int epoch = 0);
  /// Seeded per-epoch shuffling, piecewise LR, stops at train.max_steps when set.
  std::vector<EpochMetrics> fit(const std::vector<TrainingSample>& samples,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

  Checkpoint checkpoint(const std::string& foundation_hash) const;

 private:
  TrainConfig cfg_;
  HoiCategories cats_;
  HoiDecoder decoder_;
  nn::AdamW optimizer_;
  std::mt19937_64 rng_;
  std::vector<double> step_losses_;
};

std::string epoch_metrics_json(const EpochMetrics& m);

}  // namespace seg2hoi
