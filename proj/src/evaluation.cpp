#include "seg2hoi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace seg2hoi {

Eigen::RowVectorXd class_probabilities(const Eigen::RowVectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double hoi_score(const Eigen::RowVectorXd& class_probs, double verb_logit, double lambda) {
  if (class_probs.size() < 2) throw std::invalid_argument("hoi_score: need at least one object class");
  const double c = class_probs.head(class_probs.size() - 1).maxCoeff();
  const double s = 1.0 / (1.0 + std::exp(-verb_logit));
  return std::clamp(std::pow(std::max(c, 0.0), lambda) * s, 0.0, 1.0);
}

Quadruplet make_quadruplet(const FoundationOutput& f, const QueryAlignment& a, const HeadOutputs& h, int row,
                           int verb, double lambda) {
  Quadruplet q;
  const Eigen::RowVectorXd logits = h.class_logits.row(row);
  const Eigen::RowVectorXd probs = class_probabilities(logits);
  Eigen::Index cls = 0;
  probs.head(probs.size() - 1).maxCoeff(&cls);
  q.object_class = static_cast<int>(cls);
  q.verb = verb;
  q.score = hoi_score(probs, h.verb_logits(row, verb), lambda);
  q.query = row;
  const int src = a.source(row);
  const Box own = src >= 0 ? f.boxes[static_cast<size_t>(src)] : Box{0.5, 0.5, 1.0, 1.0};
  const Eigen::RowVectorXd b = h.boxes.row(row);
  const Box counterpart{b(0), b(1), b(2), b(3)};
  if (a.is_human_row(row)) {
    q.human_box = own;
    q.object_box = counterpart;
  } else {
    q.human_box = counterpart;
    q.object_box = own;
  }
  const Eigen::RowVectorXd u = h.union_logits.row(row);
  q.union_mask = BinaryMask::from_logits({u.data(), static_cast<size_t>(u.size())}, f.grid_height, f.grid_width);
  const Eigen::RowVectorXd in = h.inter_logits.row(row);
  BinaryMask im = BinaryMask::from_logits({in.data(), static_cast<size_t>(in.size())}, f.grid_height, f.grid_width);
  if (!im.empty()) q.intersection_mask = std::move(im);
  return q;
}

std::vector<bool> detection_rows(const QueryAlignment& a, const HeadOutputs& h) {
  std::vector<bool> rows(static_cast<size_t>(a.rows()), false);
  for (int r = 0; r < a.rows(); ++r) {
    if (!a.valid(r)) continue;
    Eigen::Index arg = 0;
    h.class_logits.row(r).maxCoeff(&arg);
    rows[static_cast<size_t>(r)] = arg != h.class_logits.cols() - 1;
  }
  return rows;
}

std::vector<Quadruplet> assemble(const FoundationOutput& f, const QueryAlignment& a, const HeadOutputs& h,
                                 const AssembleOptions& opt) {
  struct Candidate {
    double score;
    int row;
    int verb;
  };
  std::vector<Candidate> cands;
  const std::vector<bool> rows = detection_rows(a, h);
  for (int r = 0; r < a.rows(); ++r) {
    if (!rows[static_cast<size_t>(r)]) continue;
    const Eigen::RowVectorXd probs = class_probabilities(h.class_logits.row(r));
    for (int v = 0; v < h.verb_logits.cols(); ++v) {
      const double s = hoi_score(probs, h.verb_logits(r, v), opt.lambda);
      if (s > opt.score_floor) cands.push_back({s, r, v});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.row != y.row) return x.row < y.row;
    return x.verb < y.verb;
  });
  if (opt.top_k >= 0 && cands.size() > static_cast<size_t>(opt.top_k)) cands.resize(static_cast<size_t>(opt.top_k));
  std::vector<Quadruplet> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back(make_quadruplet(f, a, h, c.row, c.verb, opt.lambda));
  return out;
}

std::vector<GtTriplet> gt_triplets(const ImageRecord& image, const HoiCategories& cats) {
  std::vector<GtTriplet> out;
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& hoi : image.hois) {
    if (hoi.object < 0) continue;
    if (!seen.insert({hoi.subject, hoi.object, hoi.verb}).second) continue;
    const auto& obj = image.boxes[static_cast<size_t>(hoi.object)];
    if (obj.category < 0 || obj.category >= static_cast<int>(cats.objects.size())) continue;
    out.push_back({image.boxes[static_cast<size_t>(hoi.subject)].box, obj.box, obj.category, hoi.verb});
  }
  return out;
}

bool recalls(const Quadruplet& q, const GtTriplet& g, double score_threshold, double iou_threshold) {
  return q.score >= score_threshold && q.verb == g.verb && q.object_class == g.object_class &&
         iou(q.human_box, g.human_box) > iou_threshold && iou(q.object_box, g.object_box) > iou_threshold;
}

double triplet_recall(const std::vector<std::vector<Quadruplet>>& preds,
                      const std::vector<std::vector<GtTriplet>>& gts, double score_threshold) {
  if (preds.size() != gts.size()) throw std::invalid_argument("triplet_recall: image count mismatch");
  int total = 0;
  int hit = 0;
  for (size_t i = 0; i < gts.size(); ++i) {
    for (const auto& g : gts[i]) {
      ++total;
      for (const auto& q : preds[i]) {
        if (recalls(q, g, score_threshold)) {
          ++hit;
          break;
        }
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

double average_precision(const std::vector<bool>& tp_ranked, int num_gt) {
  if (num_gt <= 0) return 0.0;
  const size_t n = tp_ranked.size();
  std::vector<double> mrec(n + 2, 0.0), mpre(n + 2, 0.0);
  int tp = 0;
  for (size_t k = 0; k < n; ++k) {
    if (tp_ranked[k]) ++tp;
    mrec[k + 1] = static_cast<double>(tp) / num_gt;
    mpre[k + 1] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  mrec[n + 1] = 1.0;
  for (size_t i = n + 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (size_t i = 1; i < n + 2; ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

std::vector<bool> rare_classes(const std::vector<int>& train_counts, int threshold) {
  std::vector<bool> rare(train_counts.size());
  for (size_t i = 0; i < train_counts.size(); ++i) rare[i] = train_counts[i] < threshold;
  return rare;
}

namespace {

// Indices sorted by score descending; equal scores keep input order.
template <typename D>
std::vector<size_t> ranked(const std::vector<D>& dets, const std::vector<size_t>& idx) {
  std::vector<size_t> out = idx;
  std::stable_sort(out.begin(), out.end(), [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

HicoReport hico_map(const std::vector<HoiDetection>& dets, const std::vector<HoiGroundTruth>& gts,
                    const HoiCategories& cats, const std::vector<bool>& rare, HicoMode mode) {
  const size_t n_cls = cats.hoi_classes.size();
  if (rare.size() != n_cls) throw std::invalid_argument("hico_map: rare flags do not match the class table");
  std::vector<std::vector<size_t>> det_by_cls(n_cls), gt_by_cls(n_cls);
  for (size_t i = 0; i < dets.size(); ++i) {
    const int c = dets[i].hoi;
    if (c < 0 || static_cast<size_t>(c) >= n_cls) throw std::out_of_range("hico_map: detection class out of range");
    det_by_cls[static_cast<size_t>(c)].push_back(i);
  }
  std::map<int, std::set<int>> image_objects;
  for (size_t i = 0; i < gts.size(); ++i) {
    const int c = gts[i].hoi;
    if (c < 0 || static_cast<size_t>(c) >= n_cls) throw std::out_of_range("hico_map: GT class out of range");
    gt_by_cls[static_cast<size_t>(c)].push_back(i);
    image_objects[gts[i].image].insert(cats.hoi_classes[static_cast<size_t>(c)].object);
  }

  HicoReport report;
  report.per_class.resize(n_cls);
  std::vector<double> full, rare_ap, nonrare_ap;
  for (size_t c = 0; c < n_cls; ++c) {
    const auto& cls_gts = gt_by_cls[c];
    if (cls_gts.empty()) continue;
    const int object = cats.hoi_classes[c].object;
    std::vector<size_t> cand;
    for (size_t i : det_by_cls[c]) {
      if (mode == HicoMode::KnownObject) {
        const auto it = image_objects.find(dets[i].image);
        if (it == image_objects.end() || !it->second.count(object)) continue;
      }
      cand.push_back(i);
    }
    std::vector<bool> taken(cls_gts.size(), false);
    std::vector<bool> tp;
    for (size_t i : ranked(dets, cand)) {
      const auto& d = dets[i];
      double best = -1.0;
      size_t best_g = 0;
      for (size_t g = 0; g < cls_gts.size(); ++g) {
        const auto& gt = gts[cls_gts[g]];
        if (gt.image != d.image) continue;
        const double ov = std::min(iou(d.human_box, gt.human_box), iou(d.object_box, gt.object_box));
        if (ov > best) {
          best = ov;
          best_g = g;
        }
      }
      const bool hit = best > 0.5 && !taken[best_g];
      if (hit) taken[best_g] = true;
      tp.push_back(hit);
    }
    const double ap = average_precision(tp, static_cast<int>(cls_gts.size()));
    report.per_class[c] = ap;
    full.push_back(ap);
    (rare[c] ? rare_ap : nonrare_ap).push_back(ap);
  }
  report.full = mean_of(full);
  report.rare = mean_of(rare_ap);
  report.nonrare = mean_of(nonrare_ap);
  return report;
}

RoleReport vcoco_role_ap(const std::vector<RoleDetection>& dets, const std::vector<RoleGroundTruth>& gts,
                         const HoiCategories& cats, RoleScenario scenario) {
  const size_t n_verb = cats.verbs.size();
  RoleReport report;
  report.per_verb.resize(n_verb);
  std::vector<std::vector<size_t>> det_by_verb(n_verb), gt_by_verb(n_verb);
  for (size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].verb < 0 || static_cast<size_t>(dets[i].verb) >= n_verb) throw std::out_of_range("vcoco_role_ap: verb");
    det_by_verb[static_cast<size_t>(dets[i].verb)].push_back(i);
  }
  for (size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].verb < 0 || static_cast<size_t>(gts[i].verb) >= n_verb) throw std::out_of_range("vcoco_role_ap: verb");
    gt_by_verb[static_cast<size_t>(gts[i].verb)].push_back(i);
  }
  std::vector<double> aps;
  for (size_t v = 0; v < n_verb; ++v) {
    if (!cats.verb_has_object_role(static_cast<int>(v))) continue;
    const auto& vg = gt_by_verb[v];
    if (vg.empty()) continue;
    std::vector<bool> taken(vg.size(), false);
    std::vector<bool> tp;
    for (size_t i : ranked(dets, det_by_verb[v])) {
      const auto& d = dets[i];
      double best = -1.0;
      size_t best_g = 0;
      for (size_t g = 0; g < vg.size(); ++g) {
        const auto& gt = gts[vg[g]];
        if (gt.image != d.image) continue;
        const double oh = iou(d.human_box, gt.human_box);
        double oo = 0.0;
        if (gt.object_box) {
          oo = d.object_box ? iou(*d.object_box, *gt.object_box) : 0.0;
        } else if (scenario == RoleScenario::S2 || !d.object_box) {
          oo = 1.0;
        }
        const double ov = std::min(oh, oo);
        if (ov > best) {
          best = ov;
          best_g = g;
        }
      }
      const bool hit = best > 0.5 && !taken[best_g];
      if (hit) taken[best_g] = true;
      tp.push_back(hit);
    }
    const double ap = average_precision(tp, static_cast<int>(vg.size()));
    report.per_verb[v] = ap;
    aps.push_back(ap);
  }
  report.map = mean_of(aps);
  return report;
}

std::string to_string(ZeroShotType t) {
  switch (t) {
    case ZeroShotType::RareFirst: return "rf-uc";
    case ZeroShotType::NonRareFirst: return "nf-uc";
    case ZeroShotType::UnseenObject: return "uo";
  }
  return "rf-uc";
}

ZeroShotType zero_shot_type_from_string(const std::string& s) {
  if (s == "rf-uc" || s == "RF-UC") return ZeroShotType::RareFirst;
  if (s == "nf-uc" || s == "NF-UC") return ZeroShotType::NonRareFirst;
  if (s == "uo" || s == "UO") return ZeroShotType::UnseenObject;
  throw std::invalid_argument("unknown zero-shot split '" + s + "'");
}

ZeroShotSplit zero_shot_split(const HoiCategories& cats, const std::vector<int>& counts, ZeroShotType type,
                              const std::vector<int>& unseen_objects, int n_unseen) {
  const int n = static_cast<int>(cats.hoi_classes.size());
  if (static_cast<int>(counts.size()) != n) throw std::invalid_argument("zero_shot_split: counts size mismatch");
  std::vector<bool> unseen(static_cast<size_t>(n), false);
  if (type == ZeroShotType::UnseenObject) {
    const std::set<int> objs(unseen_objects.begin(), unseen_objects.end());
    for (int c = 0; c < n; ++c) unseen[static_cast<size_t>(c)] = objs.count(cats.hoi_classes[static_cast<size_t>(c)].object) > 0;
  } else {
    if (n_unseen < 0 || n_unseen > n) throw std::invalid_argument("zero_shot_split: unseen count out of range");
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const bool rare_first = type == ZeroShotType::RareFirst;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const int ca = counts[static_cast<size_t>(a)], cb = counts[static_cast<size_t>(b)];
      return rare_first ? ca < cb : ca > cb;
    });
    for (int i = 0; i < n_unseen; ++i) unseen[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;
  }
  ZeroShotSplit split;
  for (int c = 0; c < n; ++c) (unseen[static_cast<size_t>(c)] ? split.unseen : split.seen).push_back(c);
  return split;
}

HoiDataset filter_unseen(const HoiDataset& d, const ZeroShotSplit& split) {
  const std::set<int> unseen(split.unseen.begin(), split.unseen.end());
  HoiDataset out = d;
  for (auto& img : out.images) {
    std::vector<HoiAnnotation> keep;
    for (const auto& h : img.hois) {
      const int obj = h.object >= 0 ? img.boxes[static_cast<size_t>(h.object)].category : -1;
      const int id = obj >= 0 ? d.categories.hoi_id(h.verb, obj) : -1;
      if (id >= 0 && unseen.count(id)) continue;
      keep.push_back(h);
    }
    img.hois = std::move(keep);
  }
  return out;
}

std::vector<HoiGroundTruth> hico_ground_truth(const HoiDataset& d) {
  std::vector<HoiGroundTruth> out;
  for (size_t i = 0; i < d.images.size(); ++i) {
    for (const auto& t : gt_triplets(d.images[i], d.categories)) {
      const int id = d.categories.hoi_id(t.verb, t.object_class);
      if (id >= 0) out.push_back({static_cast<int>(i), id, t.human_box, t.object_box});
    }
  }
  return out;
}

std::vector<HoiDetection> hico_detections(int image, const std::vector<Quadruplet>& qs, const HoiCategories& cats) {
  std::vector<HoiDetection> out;
  for (const auto& q : qs) {
    const int id = cats.hoi_id(q.verb, q.object_class);
    if (id >= 0) out.push_back({image, id, q.human_box, q.object_box, q.score});
  }
  return out;
}

std::vector<RoleGroundTruth> role_ground_truth(const HoiDataset& d) {
  std::vector<RoleGroundTruth> out;
  for (size_t i = 0; i < d.images.size(); ++i) {
    const auto& img = d.images[i];
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& h : img.hois) {
      if (!seen.insert({h.subject, h.object, h.verb}).second) continue;
      RoleGroundTruth g{static_cast<int>(i), h.verb, img.boxes[static_cast<size_t>(h.subject)].box, std::nullopt};
      if (h.object >= 0) g.object_box = img.boxes[static_cast<size_t>(h.object)].box;
      out.push_back(g);
    }
  }
  return out;
}

std::vector<RoleDetection> role_detections(int image, const std::vector<Quadruplet>& qs) {
  std::vector<RoleDetection> out;
  for (const auto& q : qs) out.push_back({image, q.verb, q.human_box, q.object_box, q.score});
  return out;
}

nlohmann::json box_json(const Box& b, int width, int height) {
  const Corners c = b.corners();
  return nlohmann::json::array({c.x_min * width, c.y_min * height, c.x_max * width, c.y_max * height});
}

nlohmann::json rle_json(const Rle& rle) {
  return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
}

Rle rle_from_json(const nlohmann::json& j) {
  Rle rle;
  rle.height = j.at("size").at(0).get<int>();
  rle.width = j.at("size").at(1).get<int>();
  rle.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  return rle;
}

nlohmann::json quadruplet_json(const Quadruplet& q, const HoiCategories& cats, int width, int height) {
  nlohmann::json j;
  j["human_box"] = box_json(q.human_box, width, height);
  j["object_box"] = box_json(q.object_box, width, height);
  j["object_class"] = {{"id", q.object_class}, {"name", cats.objects.at(static_cast<size_t>(q.object_class))}};
  j["verb"] = {{"id", q.verb}, {"name", cats.verbs.at(static_cast<size_t>(q.verb))}};
  j["score"] = q.score;
  j["union_mask"] = rle_json(encode_rle(q.union_mask));
  j["intersection_mask"] = q.intersection_mask ? rle_json(encode_rle(*q.intersection_mask)) : nlohmann::json(nullptr);
  j["query_index"] = q.query;
  return j;
}

nlohmann::json prediction_dump(const std::string& image_id, const std::vector<Quadruplet>& qs,
                               const HoiCategories& cats, int width, int height) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& q : qs) arr.push_back(quadruplet_json(q, cats, width, height));
  return {{"image_id", image_id}, {"quadruplets", std::move(arr)}};
}

}  // namespace seg2hoi
