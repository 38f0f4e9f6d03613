#include "seg2hoi/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace seg2hoi {

using ag::Var;

namespace {

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Box row_box(const Matrix& m, Eigen::Index r) { return Box{m(r, 0), m(r, 1), m(r, 2), m(r, 3)}; }

Eigen::RowVectorXd box_row(const Box& b) {
  Eigen::RowVectorXd r(4);
  r << b.cx, b.cy, b.w, b.h;
  return r;
}

// K distinct cells drawn uniformly, or every cell in order when K covers the grid.
std::vector<int> sample_cells(int cells, int k, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<size_t>(cells));
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= cells) return idx;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, cells - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(rng))]);
  }
  idx.resize(static_cast<size_t>(k));
  return idx;
}

struct MaskTerms {
  Var ce;
  Var dice;
  double ce_value = 0.0;
  double dice_value = 0.0;
};

MaskTerms point_mask_loss(const Var& logits, const std::vector<int>& rows, const std::vector<const BinaryMask*>& targets,
                          int points, std::mt19937_64& rng) {
  const int cells = static_cast<int>(logits.cols());
  std::vector<std::vector<int>> cols;
  Matrix t(static_cast<Eigen::Index>(rows.size()), std::min(points, cells));
  for (size_t i = 0; i < rows.size(); ++i) {
    cols.push_back(sample_cells(cells, points, rng));
    for (size_t k = 0; k < cols.back().size(); ++k) {
      t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = targets[i]->cell(cols.back()[k]) ? 1.0 : 0.0;
    }
  }
  const Var sampled = ag::gather_points(logits, rows, cols);
  MaskTerms m;
  m.ce = ag::bce_rows_sum(sampled, t);
  m.dice = ag::dice_rows_sum(sampled, t);
  m.ce_value = m.ce.scalar();
  m.dice_value = m.dice.scalar();
  return m;
}

}  // namespace

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  verb += o.verb;
  cls += o.cls;
  box += o.box;
  giou += o.giou;
  union_ce += o.union_ce;
  union_dice += o.union_dice;
  inter_ce += o.inter_ce;
  inter_dice += o.inter_dice;
  total += o.total;
  return *this;
}

Assignment hungarian(const Matrix& cost) {
  const int preds = static_cast<int>(cost.rows());
  const int gts = static_cast<int>(cost.cols());
  if (preds < gts) throw std::invalid_argument("hungarian: fewer predictions than ground truths");
  if (!cost.allFinite()) throw std::invalid_argument("hungarian: cost matrix has non-finite entries");
  Assignment out;
  // Shortest augmenting paths with potentials; GTs are the rows being assigned.
  const int n = gts;
  const int m = preds;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(m) + 1, 0), way(static_cast<size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(j - 1, i0 - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> pred_of_gt(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<size_t>(j)] != 0) {
      pred_of_gt[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
    } else {
      out.unmatched.push_back(j - 1);
    }
  }
  for (int g = 0; g < n; ++g) out.pairs.emplace_back(pred_of_gt[static_cast<size_t>(g)], g);
  return out;
}

double assignment_cost(const Matrix& cost, const Assignment& a) {
  double total = 0.0;
  for (const auto& [p, g] : a.pairs) total += cost(p, g);
  return total;
}

PredictionRow prediction_row(const HeadOutputs& h, const std::vector<Box>& own, int row) {
  PredictionRow p;
  p.verb_logits = h.verb_logits.row(row);
  p.class_logits = h.class_logits.row(row);
  p.own_box = own[static_cast<size_t>(row)];
  p.counterpart_box = row_box(h.boxes, row);
  p.human_row = row >= h.object_rows;
  p.union_logits = h.union_logits.row(row);
  p.inter_logits = h.inter_logits.row(row);
  return p;
}

double verb_cost(const Eigen::RowVectorXd& logits, const std::vector<bool>& targets) {
  double pos = 0.0, neg = 0.0, n_pos = 0.0, n_neg = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    const double prob = sigmoid(logits(k));
    if (targets[static_cast<size_t>(k)]) {
      pos += prob;
      n_pos += 1.0;
    } else {
      neg += 1.0 - prob;
      n_neg += 1.0;
    }
  }
  return -(pos / (n_pos + 1e-4) + neg / (n_neg + 1e-4)) / 2.0;
}

double mask_cost(const Eigen::RowVectorXd& logits, const BinaryMask& target) {
  if (logits.size() != target.cells()) throw std::invalid_argument("mask_cost: size mismatch");
  double ce = 0.0, inter = 0.0, psum = 0.0, tsum = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    const double t = target.cell(static_cast<int>(k)) ? 1.0 : 0.0;
    const double p = sigmoid(logits(k));
    ce += softplus(logits(k)) - t * logits(k);
    inter += p * t;
    psum += p;
    tsum += t;
  }
  ce /= static_cast<double>(std::max<Eigen::Index>(1, logits.size()));
  return ce + (1.0 - (2.0 * inter + 1.0) / (psum + tsum + 1.0));
}

double pair_cost(const PredictionRow& p, const GroundTruthHOI& g, const CostWeights& w) {
  const Eigen::RowVectorXd& c = p.class_logits;
  const double mx = c.maxCoeff();
  const double z = (c.array() - mx).exp().sum();
  const double class_prob = std::exp(c(g.object_class) - mx) / z;
  const double l1 = std::max(box_l1(p.human_box(), g.human_box), box_l1(p.object_box(), g.object_box));
  const double gi = std::max(1.0 - giou(p.human_box(), g.human_box), 1.0 - giou(p.object_box(), g.object_box));
  double cost = w.verb * verb_cost(p.verb_logits, g.verbs) - w.cls * class_prob + w.box * l1 + w.giou * gi;
  if (g.pseudo) {
    cost += w.mask_union * mask_cost(p.union_logits, g.pseudo->union_mask);
    if (w.match_intersection && g.pseudo->intersection_mask) {
      cost += w.mask_inter * mask_cost(p.inter_logits, *g.pseudo->intersection_mask);
    }
  }
  return cost;
}

Matrix cost_matrix(const HeadOutputs& h, const std::vector<Box>& own, const std::vector<int>& valid_rows,
                   const std::vector<GroundTruthHOI>& gts, const CostWeights& w) {
  Matrix c(static_cast<Eigen::Index>(valid_rows.size()), static_cast<Eigen::Index>(gts.size()));
  for (size_t r = 0; r < valid_rows.size(); ++r) {
    const PredictionRow p = prediction_row(h, own, valid_rows[r]);
    for (size_t g = 0; g < gts.size(); ++g) {
      c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(g)) = pair_cost(p, gts[g], w);
    }
  }
  return c;
}

Assignment match(const HeadOutputs& h, const std::vector<Box>& own, const std::vector<bool>& valid,
                 const std::vector<GroundTruthHOI>& gts, const CostWeights& w) {
  std::vector<int> rows;
  for (size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) rows.push_back(static_cast<int>(i));
  }
  Assignment local = hungarian(cost_matrix(h, own, rows, gts, w));
  Assignment out;
  for (const auto& [p, g] : local.pairs) out.pairs.emplace_back(rows[static_cast<size_t>(p)], g);
  std::vector<bool> taken(valid.size(), false);
  for (const auto& pr : out.pairs) taken[static_cast<size_t>(pr.first)] = true;
  for (size_t i = 0; i < valid.size(); ++i) {
    if (!taken[i]) out.unmatched.push_back(static_cast<int>(i));
  }
  return out;
}

Var giou_rows(const Var& pred, const Matrix& target) {
  ag::Tape& t = pred.tape();
  const Var cx = ag::slice_cols(pred, 0, 1);
  const Var cy = ag::slice_cols(pred, 1, 1);
  const Var w = ag::slice_cols(pred, 2, 1);
  const Var h = ag::slice_cols(pred, 3, 1);
  const Var x0 = ag::sub(cx, ag::scale(w, 0.5));
  const Var x1 = ag::add(cx, ag::scale(w, 0.5));
  const Var y0 = ag::sub(cy, ag::scale(h, 0.5));
  const Var y1 = ag::add(cy, ag::scale(h, 0.5));
  const Matrix tx0 = target.col(0) - target.col(2) / 2.0;
  const Matrix tx1 = target.col(0) + target.col(2) / 2.0;
  const Matrix ty0 = target.col(1) - target.col(3) / 2.0;
  const Matrix ty1 = target.col(1) + target.col(3) / 2.0;
  const Var ctx0 = t.constant(tx0), ctx1 = t.constant(tx1), cty0 = t.constant(ty0), cty1 = t.constant(ty1);
  const Var iw = ag::relu(ag::sub(ag::cwise_min(x1, ctx1), ag::cwise_max(x0, ctx0)));
  const Var ih = ag::relu(ag::sub(ag::cwise_min(y1, cty1), ag::cwise_max(y0, cty0)));
  const Var inter = ag::mul(iw, ih);
  const Matrix target_area = target.col(2).cwiseProduct(target.col(3));
  const Var uni = ag::sub(ag::add(ag::mul(w, h), t.constant(target_area)), inter);
  const Var ew = ag::sub(ag::cwise_max(x1, ctx1), ag::cwise_min(x0, ctx0));
  const Var eh = ag::sub(ag::cwise_max(y1, cty1), ag::cwise_min(y0, cty0));
  const Var encl = ag::mul(ew, eh);
  return ag::sub(ag::div(inter, uni), ag::div(ag::sub(encl, uni), encl));
}

std::vector<Box> own_boxes(const FoundationOutput& f, const QueryAlignment& a) {
  std::vector<Box> out;
  out.reserve(static_cast<size_t>(a.rows()));
  for (int r = 0; r < a.rows(); ++r) {
    const int src = a.source(r);
    out.push_back(src >= 0 ? f.boxes[static_cast<size_t>(src)] : Box{0.5, 0.5, 1.0, 1.0});
  }
  return out;
}

LossResult compute_loss(const std::vector<HeadVars>& layers, const QueryAlignment& alignment,
                        const std::vector<Box>& own, const std::vector<GroundTruthHOI>& gts,
                        const CostWeights& cost, const LossWeights& lw, const LossScale& scale,
                        std::mt19937_64& rng) {
  if (layers.empty()) throw std::invalid_argument("compute_loss: no decoder layers");
  ag::Tape& tape = layers.front().verb_logits.tape();
  const int rows = alignment.rows();
  std::vector<bool> valid(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) valid[static_cast<size_t>(r)] = alignment.valid(r);
  const double inv_gt = 1.0 / std::max(1.0, scale.num_gt);
  const double inv_batch = 1.0 / std::max(1.0, scale.batch_size);

  LossResult result;
  std::vector<Var> terms;
  for (const HeadVars& layer : layers) {
    const HeadOutputs values = to_values(layer, alignment.object_rows());
    const Eigen::Index num_verbs = values.verb_logits.cols();
    const Eigen::Index no_object = values.class_logits.cols() - 1;
    Assignment asg = gts.empty() ? Assignment{} : match(values, own, valid, gts, cost);
    LossBreakdown part;

    Matrix verb_targets = Matrix::Zero(rows, num_verbs);
    std::vector<int> labels(static_cast<size_t>(rows), -1);
    for (int r = 0; r < rows; ++r) {
      if (valid[static_cast<size_t>(r)]) labels[static_cast<size_t>(r)] = static_cast<int>(no_object);
    }
    for (const auto& [p, g] : asg.pairs) {
      const GroundTruthHOI& gt = gts[static_cast<size_t>(g)];
      for (Eigen::Index k = 0; k < num_verbs; ++k) verb_targets(p, k) = gt.verbs[static_cast<size_t>(k)] ? 1.0 : 0.0;
      labels[static_cast<size_t>(p)] = gt.object_class;
    }
    const Var verb = ag::scale(
        ag::sigmoid_focal_sum(layer.verb_logits, verb_targets, valid, lw.focal_alpha, lw.focal_gamma), inv_gt);
    std::vector<double> class_weights(static_cast<size_t>(no_object + 1), 1.0);
    class_weights.back() = lw.no_object_weight;
    const Var cls = ag::scale(ag::softmax_cross_entropy(layer.class_logits, labels, class_weights), inv_batch);
    part.verb = verb.scalar();
    part.cls = cls.scalar();
    terms.push_back(ag::scale(verb, lw.verb));
    terms.push_back(ag::scale(cls, lw.cls));

    if (!asg.pairs.empty()) {
      std::vector<int> matched;
      Matrix counterpart_target(static_cast<Eigen::Index>(asg.pairs.size()), 4);
      double own_l1 = 0.0;
      double own_giou = 0.0;
      std::vector<int> union_rows, inter_rows;
      std::vector<const BinaryMask*> union_targets, inter_targets;
      for (size_t i = 0; i < asg.pairs.size(); ++i) {
        const auto [p, g] = asg.pairs[i];
        const GroundTruthHOI& gt = gts[static_cast<size_t>(g)];
        const bool human_row = alignment.is_human_row(p);
        const Box& own_gt = human_row ? gt.human_box : gt.object_box;
        const Box& other_gt = human_row ? gt.object_box : gt.human_box;
        matched.push_back(p);
        counterpart_target.row(static_cast<Eigen::Index>(i)) = box_row(other_gt);
        own_l1 += box_l1(own[static_cast<size_t>(p)], own_gt);
        own_giou += 1.0 - giou(own[static_cast<size_t>(p)], own_gt);
        if (gt.pseudo) {
          union_rows.push_back(p);
          union_targets.push_back(&gt.pseudo->union_mask);
          if (gt.pseudo->intersection_mask) {
            inter_rows.push_back(p);
            inter_targets.push_back(&*gt.pseudo->intersection_mask);
          }
        }
      }
      const Var pred = ag::gather_rows(layer.boxes, matched);
      const Var l1 = ag::add_scalar(ag::sum(ag::abs(ag::sub(pred, tape.constant(counterpart_target)))), own_l1);
      const double count = static_cast<double>(matched.size());
      const Var gi = ag::add_scalar(ag::scale(ag::sum(giou_rows(pred, counterpart_target)), -1.0), count + own_giou);
      const Var box = ag::scale(l1, inv_gt);
      const Var giou_loss = ag::scale(gi, inv_gt);
      part.box = box.scalar();
      part.giou = giou_loss.scalar();
      terms.push_back(ag::scale(box, lw.box));
      terms.push_back(ag::scale(giou_loss, lw.giou));

      if (lw.union_masks && !union_rows.empty()) {
        const MaskTerms m = point_mask_loss(layer.union_logits, union_rows, union_targets, lw.mask_points, rng);
        part.union_ce = m.ce_value * inv_gt;
        part.union_dice = m.dice_value * inv_gt;
        terms.push_back(ag::scale(ag::add(m.ce, m.dice), lw.mask_union * inv_gt));
      }
      if (lw.intersection_masks && !inter_rows.empty()) {
        const MaskTerms m = point_mask_loss(layer.inter_logits, inter_rows, inter_targets, lw.mask_points, rng);
        part.inter_ce = m.ce_value * inv_gt;
        part.inter_dice = m.dice_value * inv_gt;
        terms.push_back(ag::scale(ag::add(m.ce, m.dice), lw.mask_inter * inv_gt));
      }
    }
    part.total = lw.verb * part.verb + lw.cls * part.cls + lw.box * part.box + lw.giou * part.giou +
                 lw.mask_union * (part.union_ce + part.union_dice) + lw.mask_inter * (part.inter_ce + part.inter_dice);
    result.parts += part;
    result.assignments.push_back(std::move(asg));
  }
  Var total = terms.front();
  for (size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
  result.total = total;
  return result;
}

}  // namespace seg2hoi
