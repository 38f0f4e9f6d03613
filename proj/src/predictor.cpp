#include "seg2hoi/predictor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "seg2hoi/trainer.hpp"

namespace seg2hoi {

Predictor::Predictor(TrainConfig cfg, HoiCategories cats, HoiDecoder decoder, std::string checkpoint_hash)
    : cfg_(std::move(cfg)),
      cats_(std::move(cats)),
      foundation_(make_foundation(cfg_)),
      decoder_(std::move(decoder)),
      embedder_(make_embedder(cfg_, cats_)),
      bank_(build_text_bank(cats_.objects, cats_.verbs, embedder_)),
      checkpoint_hash_(std::move(checkpoint_hash)) {}

Predictor::Predictor(const Checkpoint& ckpt)
    : Predictor(ckpt.config, ckpt.categories, make_decoder(ckpt.config, ckpt.categories), seg2hoi::checkpoint_hash(ckpt)) {
  if (!ckpt.foundation_hash.empty() && ckpt.foundation_hash != foundation_->parameter_hash()) {
    throw std::runtime_error("checkpoint was trained against a different foundation model");
  }
  restore_parameters(decoder_.params(), ckpt.params);
}

Predictor Predictor::load(const std::string& path) { return Predictor(load_checkpoint(path)); }

Inference Predictor::infer(const Image& image) const {
  Inference inf;
  inf.foundation = foundation_->extract(image);
  inf.alignment = decoder_.align(inf.foundation);
  inf.heads = decoder_.infer(inf.foundation, inf.alignment);
  return inf;
}

std::vector<Quadruplet> Predictor::detect(const Inference& inf, int top_k) const {
  AssembleOptions opt{cfg_.eval.lambda, top_k, cfg_.eval.score_floor};
  return assemble(inf.foundation, inf.alignment, inf.heads, opt);
}

std::vector<bool> Predictor::retrieval_rows(const Inference& inf) const {
  std::vector<bool> rows = detection_rows(inf.alignment, inf.heads);
  bool any = false;
  for (bool b : rows) any = any || b;
  if (any) return rows;
  for (int r = 0; r < inf.alignment.rows(); ++r) {
    rows[static_cast<size_t>(r)] = inf.alignment.valid(r);
    any = any || rows[static_cast<size_t>(r)];
  }
  if (!any) rows.clear();
  return rows;
}

int Predictor::best_verb(const HeadOutputs& h, int row) const {
  Eigen::Index v = 0;
  h.verb_logits.row(row).maxCoeff(&v);
  return static_cast<int>(v);
}

std::optional<Quadruplet> Predictor::prompt_visual(const Inference& inf, int image_width, int image_height,
                                                   const std::vector<std::pair<int, int>>& points) const {
  const Eigen::RowVectorXd prompt =
      visual_prompt_embedding(inf.foundation.pixel_embedding, inf.foundation.grid_height, inf.foundation.grid_width,
                              image_width, image_height, points);
  const std::vector<bool> rows = retrieval_rows(inf);
  if (rows.empty()) return std::nullopt;
  const int row = retrieve_visual(prompt, inf.heads.union_embed, rows);
  return make_quadruplet(inf.foundation, inf.alignment, inf.heads, row, best_verb(inf.heads, row), cfg_.eval.lambda);
}

std::optional<Quadruplet> Predictor::prompt_text(const Inference& inf, const std::string& text) const {
  if (text.empty()) throw std::invalid_argument("text prompt is empty");
  const std::vector<bool> rows = retrieval_rows(inf);
  if (rows.empty()) return std::nullopt;
  const Eigen::RowVectorXd prompt = embedder_.embed(text);
  const HeadOutputs& h = inf.heads;
  const bool text_heads = h.object_embed.rows() == h.verb_logits.rows() && h.object_embed.cols() == prompt.size();
  int row = 0;
  if (text_heads) {
    row = retrieve_text(prompt, h.object_embed, h.verb_embed, rows);
  } else {
    // Linear heads: score rows through the bank instead of the learned embeddings.
    double best = -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd so = similarity_logits(bank_.objects, prompt).col(0);
    const Eigen::VectorXd sv = similarity_logits(bank_.verbs, prompt).col(0);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      if (!rows[static_cast<size_t>(r)]) continue;
      const Eigen::RowVectorXd p = class_probabilities(h.class_logits.row(r));
      const double s = p.head(p.size() - 1).dot(so) *
                       (1.0 / (1.0 + (-h.verb_logits.row(r).array()).exp())).matrix().dot(sv);
      if (s > best) {
        best = s;
        row = r;
      }
    }
  }
  const Eigen::VectorXd verb_sim = similarity_logits(bank_.verbs, prompt).col(0);
  int verb = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < h.verb_logits.cols(); ++j) {
    const double s = verb_sim(j) / (1.0 + std::exp(-h.verb_logits(row, j)));
    if (s > best) {
      best = s;
      verb = j;
    }
  }
  return make_quadruplet(inf.foundation, inf.alignment, h, row, verb, cfg_.eval.lambda);
}

namespace {

double mean_ap(const HicoReport& r, const std::vector<int>& classes) {
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    const auto& ap = r.per_class[static_cast<size_t>(c)];
    if (!ap) continue;
    sum += *ap;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace

nlohmann::json evaluate_dataset(const Predictor& p, const HoiDataset& d, const std::string& root,
                                std::vector<nlohmann::json>* dumps, const EvalSplits& splits) {
  std::vector<std::vector<Quadruplet>> preds;
  std::vector<std::vector<GtTriplet>> gts;
  std::vector<HoiDetection> hico_dets;
  std::vector<RoleDetection> role_dets;
  for (size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& rec = d.images[i];
    const Image img = load_image(rec, root);
    auto qs = p.detect(img, p.config().eval.top_k);
    const int idx = static_cast<int>(i);
    const auto h = hico_detections(idx, qs, d.categories);
    hico_dets.insert(hico_dets.end(), h.begin(), h.end());
    const auto r = role_detections(idx, qs);
    role_dets.insert(role_dets.end(), r.begin(), r.end());
    if (dumps) dumps->push_back(prediction_dump(rec.file_name, qs, d.categories, img.width, img.height));
    gts.push_back(gt_triplets(rec, d.categories));
    preds.push_back(std::move(qs));
  }
  nlohmann::json report;
  report["images"] = d.images.size();
  report["triplet_recall"] = triplet_recall(preds, gts, 0.1);
  if (d.format == DatasetFormat::Hico) {
    const auto rare = rare_classes(splits.train_counts.empty() ? d.hoi_instance_counts() : splits.train_counts);
    const auto gt = hico_ground_truth(d);
    const HicoReport def = hico_map(hico_dets, gt, d.categories, rare, HicoMode::Default);
    const HicoReport ko = hico_map(hico_dets, gt, d.categories, rare, HicoMode::KnownObject);
    report["default"] = {{"full", def.full}, {"rare", def.rare}, {"nonrare", def.nonrare}};
    report["known_object"] = {{"full", ko.full}, {"rare", ko.rare}, {"nonrare", ko.nonrare}};
    if (splits.zero_shot) {
      report["zero_shot"] = {{"split", splits.zero_shot_name},
                             {"full", def.full},
                             {"unseen", mean_ap(def, splits.zero_shot->unseen)},
                             {"seen", mean_ap(def, splits.zero_shot->seen)}};
    }
  } else {
    const auto gt = role_ground_truth(d);
    report["ap_role_s1"] = vcoco_role_ap(role_dets, gt, d.categories, RoleScenario::S1).map;
    report["ap_role_s2"] = vcoco_role_ap(role_dets, gt, d.categories, RoleScenario::S2).map;
  }
  return report;
}

}  // namespace seg2hoi
