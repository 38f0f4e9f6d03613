#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seg2hoi/dataset.hpp"
#include "seg2hoi/decoder.hpp"

namespace seg2hoi {

struct Quadruplet {
  Box human_box;
  Box object_box;
  int object_class = 0;
  int verb = 0;
  double score = 0.0;
  BinaryMask union_mask;
  std::optional<BinaryMask> intersection_mask;
  int query = 0;
};

/// Softmax over one class-logit row (last entry = no object).
Eigen::RowVectorXd class_probabilities(const Eigen::RowVectorXd& logits);
/// (max over object classes of p)^lambda * sigmoid(verb_logit). The no-object
/// entry of `class_probs` is ignored.
double hoi_score(const Eigen::RowVectorXd& class_probs, double verb_logit, double lambda);

struct AssembleOptions {
  double lambda = 0.5;
  int top_k = 100;
  double score_floor = 0.0;
};

/// Quadruplet for one decoder row and verb (no score filtering).
Quadruplet make_quadruplet(const FoundationOutput& f, const QueryAlignment& a, const HeadOutputs& h, int row,
                           int verb, double lambda);
/// Rows that can produce detections: valid and not classified as no-object.
std::vector<bool> detection_rows(const QueryAlignment& a, const HeadOutputs& h);
/// Every (row, verb) above the floor, sorted by score with ties broken by
/// (row, verb), truncated to top_k.
std::vector<Quadruplet> assemble(const FoundationOutput& f, const QueryAlignment& a, const HeadOutputs& h,
                                 const AssembleOptions& opt);

/// One (human, verb, object) ground truth.
struct GtTriplet {
  Box human_box;
  Box object_box;
  int object_class = 0;
  int verb = 0;
};

std::vector<GtTriplet> gt_triplets(const ImageRecord& image, const HoiCategories& cats);
bool recalls(const Quadruplet& q, const GtTriplet& g, double score_threshold, double iou_threshold = 0.5);
/// Fraction of GT triplets matched by some prediction of the same image.
double triplet_recall(const std::vector<std::vector<Quadruplet>>& preds,
                      const std::vector<std::vector<GtTriplet>>& gts, double score_threshold = 0.1);

/// Area under the monotone (all-points interpolated) precision envelope.
double average_precision(const std::vector<bool>& tp_ranked, int num_gt);

struct HoiDetection {
  int image = 0;
  int hoi = 0;
  Box human_box;
  Box object_box;
  double score = 0.0;
};

struct HoiGroundTruth {
  int image = 0;
  int hoi = 0;
  Box human_box;
  Box object_box;
};

enum class HicoMode { Default, KnownObject };

struct HicoReport {
  double full = 0.0;
  double rare = 0.0;
  double nonrare = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt: no GT, excluded
};

/// Classes with fewer than `threshold` training instances.
std::vector<bool> rare_classes(const std::vector<int>& train_counts, int threshold = 10);

/// Per-class AP with both-box IoU > 0.5. Each detection takes the GT with the
/// highest min(IoU_h, IoU_o); if that GT is already taken it is a false positive.
/// Known-object mode keeps only images whose GT contains the class's object.
HicoReport hico_map(const std::vector<HoiDetection>& dets, const std::vector<HoiGroundTruth>& gts,
                    const HoiCategories& cats, const std::vector<bool>& rare, HicoMode mode = HicoMode::Default);

struct RoleDetection {
  int image = 0;
  int verb = 0;
  Box human_box;
  std::optional<Box> object_box;
  double score = 0.0;
};

struct RoleGroundTruth {
  int image = 0;
  int verb = 0;
  Box human_box;
  std::optional<Box> object_box;  // nullopt: role object not present
};

enum class RoleScenario { S1, S2 };

struct RoleReport {
  double map = 0.0;
  std::vector<std::optional<double>> per_verb;  // nullopt: no role or no GT
};

/// Role AP over verbs whose role is not "none". For a GT without an object,
/// S1 needs a detection without an object box and S2 ignores the object box.
RoleReport vcoco_role_ap(const std::vector<RoleDetection>& dets, const std::vector<RoleGroundTruth>& gts,
                         const HoiCategories& cats, RoleScenario scenario);

enum class ZeroShotType { RareFirst, NonRareFirst, UnseenObject };

std::string to_string(ZeroShotType t);
ZeroShotType zero_shot_type_from_string(const std::string& s);

struct ZeroShotSplit {
  std::vector<int> seen;    // ascending HOI ids
  std::vector<int> unseen;  // ascending HOI ids
};

/// RF-UC / NF-UC hold out the `n_unseen` rarest / most frequent HOIs (ties by
/// id); UO holds out every HOI whose object is in `unseen_objects`.
ZeroShotSplit zero_shot_split(const HoiCategories& cats, const std::vector<int>& counts, ZeroShotType type,
                              const std::vector<int>& unseen_objects = {}, int n_unseen = 120);
/// Drops every HOI annotation whose class is unseen.
HoiDataset filter_unseen(const HoiDataset& d, const ZeroShotSplit& split);

/// Dataset-level conversions for the evaluators.
std::vector<HoiGroundTruth> hico_ground_truth(const HoiDataset& d);
std::vector<HoiDetection> hico_detections(int image, const std::vector<Quadruplet>& qs, const HoiCategories& cats);
std::vector<RoleGroundTruth> role_ground_truth(const HoiDataset& d);
std::vector<RoleDetection> role_detections(int image, const std::vector<Quadruplet>& qs);

nlohmann::json box_json(const Box& b, int width, int height);
nlohmann::json rle_json(const Rle& rle);
Rle rle_from_json(const nlohmann::json& j);
nlohmann::json quadruplet_json(const Quadruplet& q, const HoiCategories& cats, int width, int height);
nlohmann::json prediction_dump(const std::string& image_id, const std::vector<Quadruplet>& qs,
                               const HoiCategories& cats, int width, int height);

}  // namespace seg2hoi
