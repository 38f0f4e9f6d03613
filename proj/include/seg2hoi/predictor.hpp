#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seg2hoi/checkpoint.hpp"
#include "seg2hoi/evaluation.hpp"
#include "seg2hoi/openvocab.hpp"

namespace seg2hoi {

/// Everything computed for one image.
struct Inference {
  FoundationOutput foundation;
  QueryAlignment alignment;
  HeadOutputs heads;
};

/// Frozen foundation + trained decoder + text embedder. Read-only after
/// construction; every method is safe to call concurrently.
class Predictor {
 public:
  Predictor(TrainConfig cfg, HoiCategories cats, HoiDecoder decoder, std::string checkpoint_hash = "");
  explicit Predictor(const Checkpoint& ckpt);
  static Predictor load(const std::string& path);

  const TrainConfig& config() const { return cfg_; }
  const HoiCategories& categories() const { return cats_; }
  const HoiDecoder& decoder() const { return decoder_; }
  const FoundationModel& foundation() const { return *foundation_; }
  const TextEmbedder& embedder() const { return embedder_; }
  const TextClassifierBank& text_bank() const { return bank_; }
  const std::string& checkpoint_hash() const { return checkpoint_hash_; }

  Inference infer(const Image& image) const;
  std::vector<Quadruplet> detect(const Inference& inf, int top_k) const;
  std::vector<Quadruplet> detect(const Image& image, int top_k) const { return detect(infer(image), top_k); }

  /// Quadruplet of the row whose union embedding best matches f_seg pooled under
  /// the points; nullopt when the image produced no rows.
  std::optional<Quadruplet> prompt_visual(const Inference& inf, int image_width, int image_height,
                                          const std::vector<std::pair<int, int>>& points) const;
  /// Quadruplet of the row maximizing cos(E_o, T) * cos(E_v, T). The verb is
  /// argmax_j sigmoid(c_v[j]) * cos(T_v[j], T).
  std::optional<Quadruplet> prompt_text(const Inference& inf, const std::string& text) const;

 private:
  std::vector<bool> retrieval_rows(const Inference& inf) const;
  int best_verb(const HeadOutputs& h, int row) const;

  TrainConfig cfg_;
  HoiCategories cats_;
  std::unique_ptr<ToyFoundation> foundation_;
  HoiDecoder decoder_;
  ToyEmbedder embedder_;
  TextClassifierBank bank_;
  std::string checkpoint_hash_;
};

/// Training-side information the HICO report needs.
struct EvalSplits {
  std::vector<int> train_counts;  // rare flags; empty uses the test counts
  std::optional<ZeroShotSplit> zero_shot;
  std::string zero_shot_name;
};

/// Runs the predictor over every image and reports triplet recall plus
/// HICO mAP (default and known-object, and unseen/seen for a zero-shot split)
/// or V-COCO role AP (S1, S2). When `dumps` is given it receives one
/// prediction record per image.
nlohmann::json evaluate_dataset(const Predictor& p, const HoiDataset& d, const std::string& root,
                                std::vector<nlohmann::json>* dumps = nullptr, const EvalSplits& splits = {});

}  // namespace seg2hoi
