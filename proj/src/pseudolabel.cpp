#include "seg2hoi/pseudolabel.hpp"

namespace seg2hoi {

std::optional<size_t> match_instance(const Box& gt, const std::vector<Box>& candidates, double beta_b,
                                     double beta_u) {
  std::optional<size_t> best;
  double best_cost = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double cost = beta_b * box_l1(gt, candidates[i]) + beta_u * (1.0 - giou(gt, candidates[i]));
    if (!best || cost < best_cost) {
      best = i;
      best_cost = cost;
    }
  }
  return best;
}

std::optional<int> match_foundation_query(const FoundationOutput& f, const Box& gt, bool human,
                                          const PseudoLabelParams& params) {
  std::vector<Box> boxes;
  std::vector<int> index;
  for (int q = 0; q < f.num_queries(); ++q) {
    const int cls = f.predicted_class(q);
    if (cls == f.background_class()) continue;
    if ((cls == f.human_class) != human) continue;
    const auto box = mask_to_box(f.instance_mask(q));
    if (!box) continue;
    boxes.push_back(*box);
    index.push_back(q);
  }
  const auto pick = match_instance(gt, boxes, params.beta_b, params.beta_u);
  if (!pick) return std::nullopt;
  return index[*pick];
}

std::optional<PseudoLabel> build_pseudo_label(const BinaryMask& human_mask, const BinaryMask& object_mask,
                                              double gamma) {
  const auto hb = mask_to_box(human_mask);
  const auto ob = mask_to_box(object_mask);
  if (!hb || !ob) return std::nullopt;
  PseudoLabel p;
  p.gamma = gamma;
  p.union_mask = mask_union(human_mask, object_mask);
  p.intersection_box = box_intersection(expand_box(*hb, gamma), expand_box(*ob, gamma));
  if (p.intersection_box) {
    BinaryMask cropped = crop_mask(p.union_mask, p.intersection_box);
    if (cropped.empty()) {
      p.intersection_box.reset();
    } else {
      p.intersection_mask = std::move(cropped);
    }
  }
  return p;
}

std::optional<PseudoLabel> build_pseudo_label(const FoundationOutput& f, int human_query, int object_query,
                                              double gamma) {
  auto p = build_pseudo_label(f.instance_mask(human_query), f.instance_mask(object_query), gamma);
  if (p) {
    p->human_query = human_query;
    p->object_query = object_query;
  }
  return p;
}

std::optional<PseudoLabel> generate_pseudo_label(const FoundationOutput& f, const Box& human_box,
                                                 const Box& object_box, const PseudoLabelParams& params) {
  const auto h = match_foundation_query(f, human_box, true, params);
  const auto o = match_foundation_query(f, object_box, false, params);
  if (!h || !o) return std::nullopt;
  return build_pseudo_label(f, *h, *o, params.gamma);
}

}  // namespace seg2hoi
