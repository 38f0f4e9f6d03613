#pragma once

#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "seg2hoi/decoder.hpp"
#include "seg2hoi/pseudolabel.hpp"

namespace seg2hoi {

struct GroundTruthHOI {
  Box human_box;
  Box object_box;
  int object_class = 0;
  std::vector<bool> verbs;  // multi-label, size N_verb
  std::optional<PseudoLabel> pseudo;
};

/// Hungarian matching cost weights.
struct CostWeights {
  double verb = 5.0;
  double cls = 4.0;
  double box = 5.0;
  double giou = 2.0;
  double mask_union = 2.0;
  double mask_inter = 0.1;
  bool match_intersection = false;
};

/// Training loss weights and switches.
struct LossWeights {
  double verb = 5.0;
  double cls = 5.0;
  double box = 3.0;
  double giou = 4.0;
  double mask_union = 2.0;
  double mask_inter = 0.1;
  double focal_alpha = 0.5;
  double focal_gamma = 2.0;
  double no_object_weight = 0.1;
  bool union_masks = true;
  bool intersection_masks = true;
  int mask_points = 1024;
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction, gt), ordered by gt
  std::vector<int> unmatched;              // prediction indices, ascending
};

/// Exact minimum-cost assignment of every column (GT) to a distinct row
/// (prediction). Throws std::invalid_argument when rows < cols or an entry is
/// not finite.
Assignment hungarian(const Matrix& cost);
/// Sum of cost(p, g) over the pairs, accumulated in GT order.
double assignment_cost(const Matrix& cost, const Assignment& a);

/// One prediction row in the form the matching cost consumes.
struct PredictionRow {
  Eigen::RowVectorXd verb_logits;
  Eigen::RowVectorXd class_logits;  // N_obj + 1, last = no object
  Box own_box;                      // frozen foundation box
  Box counterpart_box;              // predicted by the box head
  bool human_row = false;
  Eigen::RowVectorXd union_logits;
  Eigen::RowVectorXd inter_logits;

  Box human_box() const { return human_row ? own_box : counterpart_box; }
  Box object_box() const { return human_row ? counterpart_box : own_box; }
};

PredictionRow prediction_row(const HeadOutputs& h, const std::vector<Box>& own_boxes, int row);

/// Focal-style multi-label verb cost.
double verb_cost(const Eigen::RowVectorXd& logits, const std::vector<bool>& targets);
/// Dense mean BCE plus dice between mask logits and a binary target.
double mask_cost(const Eigen::RowVectorXd& logits, const BinaryMask& target);
double pair_cost(const PredictionRow& p, const GroundTruthHOI& g, const CostWeights& w);

/// Cost matrix over the valid rows only; row r of the result is valid_rows[r].
Matrix cost_matrix(const HeadOutputs& h, const std::vector<Box>& own_boxes, const std::vector<int>& valid_rows,
                   const std::vector<GroundTruthHOI>& gts, const CostWeights& w);
/// Matching in full row index space; invalid rows never match.
Assignment match(const HeadOutputs& h, const std::vector<Box>& own_boxes, const std::vector<bool>& valid,
                 const std::vector<GroundTruthHOI>& gts, const CostWeights& w);

/// Generalized IoU of each row of `pred` (cx, cy, w, h) against `target`, as an M x 1 node.
ag::Var giou_rows(const ag::Var& pred, const Matrix& target);

struct LossBreakdown {
  double verb = 0.0;
  double cls = 0.0;
  double box = 0.0;
  double giou = 0.0;
  double union_ce = 0.0;
  double union_dice = 0.0;
  double inter_ce = 0.0;
  double inter_dice = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

struct LossResult {
  ag::Var total;
  LossBreakdown parts;  // unweighted terms, summed over layers
  std::vector<Assignment> assignments;  // one per layer
};

/// Normalizers shared by every image of a batch.
struct LossScale {
  double num_gt = 1.0;      // GT pairs in the batch, at least 1
  double batch_size = 1.0;  // images in the batch
};

/// Loss of one image summed over all decoder layers.
LossResult compute_loss(const std::vector<HeadVars>& layers, const QueryAlignment& alignment,
                        const std::vector<Box>& own_boxes, const std::vector<GroundTruthHOI>& gts,
                        const CostWeights& cost, const LossWeights& weights, const LossScale& scale,
                        std::mt19937_64& rng);

/// Foundation box of every decoder row (unit box for padded rows).
std::vector<Box> own_boxes(const FoundationOutput& f, const QueryAlignment& a);

}  // namespace seg2hoi
