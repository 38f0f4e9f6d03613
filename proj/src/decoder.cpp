#include "seg2hoi/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace seg2hoi {

using ag::Var;

namespace {

constexpr double kBoxEps = 1e-6;
constexpr double kVerbPriorBias = -2.2;  // sigmoid(-2.2) ~ 0.1

// Column vector broadcast across `width` columns.
Var broadcast_col(const Var& col, Eigen::Index width) {
  return ag::matmul(col, col.tape().constant(Matrix::Ones(1, width)));
}

}  // namespace

std::string to_string(ClassifierMode mode) { return mode == ClassifierMode::Text ? "text" : "linear"; }

ClassifierMode classifier_mode_from_string(const std::string& s) {
  if (s == "text") return ClassifierMode::Text;
  if (s == "linear") return ClassifierMode::Linear;
  throw std::invalid_argument("unknown classifier mode: " + s);
}

void DecoderConfig::validate() const {
  if (hidden <= 0 || hidden % 4 != 0) throw std::invalid_argument("decoder hidden size must be a positive multiple of 4");
  if (heads <= 0 || hidden % heads != 0) throw std::invalid_argument("decoder heads must divide the hidden size");
  if (layers <= 0) throw std::invalid_argument("decoder needs at least one layer");
  if (object_queries <= 0) throw std::invalid_argument("object_queries must be positive");
  if (human_replicas <= 0 || human_slots < human_replicas) throw std::invalid_argument("invalid human slot settings");
  if (num_verbs <= 0 || num_objects <= 0) throw std::invalid_argument("verb and object counts must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

bool QueryAlignment::valid(int row) const {
  return row < object_rows() ? object_valid[static_cast<size_t>(row)]
                             : human_valid[static_cast<size_t>(row - object_rows())];
}

int QueryAlignment::source(int row) const {
  return row < object_rows() ? object_source[static_cast<size_t>(row)]
                             : human_source[static_cast<size_t>(row - object_rows())];
}

QueryAlignment align_queries(const FoundationOutput& f, const DecoderConfig& cfg) {
  QueryAlignment a;
  const int n = f.num_queries();
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return f.max_foreground_logit(x) > f.max_foreground_logit(y); });
  for (int i = 0; i < cfg.object_queries; ++i) {
    const bool ok = i < n;
    a.object_source.push_back(ok ? order[static_cast<size_t>(i)] : -1);
    a.object_valid.push_back(ok);
  }
  for (int q = 0; q < n; ++q) {
    if (f.predicted_class(q) != f.human_class) continue;
    for (int r = 0; r < cfg.human_replicas && a.human_rows() < cfg.human_slots; ++r) {
      a.human_source.push_back(q);
      a.human_replica.push_back(r);
      a.human_valid.push_back(true);
    }
  }
  const int target = cfg.pad_human_slots ? cfg.human_slots : std::max(1, a.human_rows());
  while (a.human_rows() < target) {
    a.human_source.push_back(-1);
    a.human_replica.push_back(0);
    a.human_valid.push_back(false);
  }
  return a;
}

Eigen::RowVectorXd sinusoid(double v, int channels) {
  Eigen::RowVectorXd out(channels);
  const double arg = 2.0 * std::numbers::pi * v;
  for (int i = 0; i < channels / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / channels);
    out(2 * i) = std::sin(arg / freq);
    out(2 * i + 1) = std::cos(arg / freq);
  }
  return out;
}

Eigen::RowVectorXd pd_encoding(const Box& b, int hidden) {
  const int half = hidden / 2;
  Eigen::RowVectorXd out(hidden + 2);
  out.head(half) = sinusoid(b.cx, half);
  out.segment(half, half) = sinusoid(b.cy, half);
  out(hidden) = b.w;
  out(hidden + 1) = b.h;
  return out;
}

HeadOutputs to_values(const HeadVars& v, int object_rows) {
  HeadOutputs h;
  h.object_rows = object_rows;
  h.verb_logits = v.verb_logits.value();
  h.class_logits = v.class_logits.value();
  h.boxes = v.boxes.value();
  h.union_logits = v.union_logits.value();
  h.inter_logits = v.inter_logits.value();
  if (v.verb_embed.defined()) h.verb_embed = v.verb_embed.value();
  if (v.object_embed.defined()) h.object_embed = v.object_embed.value();
  h.union_embed = v.union_embed.value();
  h.relation = v.relation.value();
  return h;
}

HoiDecoder::HoiDecoder(DecoderConfig config, std::optional<TextEmbeddings> text) : config_(config) {
  config_.validate();
  const int c = config_.hidden;
  std::mt19937_64 rng(config_.seed);
  pd_proj_ = nn::Linear::create(store_, "pos.pd", c + 2, c, rng);
  ref_mlp_ = nn::Mlp::create(store_, "pos.ref", {c, c, 2}, rng);
  {
    std::normal_distribution<double> dist(0.0, 0.5);
    Matrix rep(config_.human_replicas, c);
    for (Eigen::Index i = 0; i < rep.size(); ++i) rep.data()[i] = dist(rng);
    replica_embed_ = store_.add("pos.replica", std::move(rep));
  }
  for (auto* branch : {&object_branch_, &human_branch_}) {
    const std::string prefix = branch == &object_branch_ ? "object" : "human";
    for (int l = 0; l < config_.layers; ++l) {
      const std::string p = prefix + ".layer" + std::to_string(l);
      branch->self_attn.push_back(nn::MultiHeadAttention::create(store_, p + ".self", c, config_.heads, rng));
      branch->cross_attn.push_back(nn::MultiHeadAttention::create(store_, p + ".cross", c, config_.heads, rng));
      branch->backbone_attn.push_back(
          nn::MultiHeadAttention::create(store_, p + ".backbone", c, config_.heads, rng));
    }
    branch->relation = nn::Mlp::create(store_, prefix + ".relation", {c, 2 * c, c}, rng);
  }

  const int classes = config_.num_objects + 1;
  if (config_.classifier == ClassifierMode::Linear) {
    verb_head_ = nn::Linear::create(store_, "head.verb", 2 * c, config_.num_verbs, rng);
    store_.value(verb_head_.bias).setConstant(kVerbPriorBias);
    self_head_ = nn::Linear::create(store_, "head.self_class", 2 * c, classes, rng);
    inter_head_ = nn::Linear::create(store_, "head.inter_class", c, classes, rng);
  } else {
    if (!text) throw std::invalid_argument("text classifier mode needs text embeddings");
    if (text->objects.rows() != config_.num_objects || text->verbs.rows() != config_.num_verbs ||
        text->objects.cols() != c || text->verbs.cols() != c) {
      throw std::invalid_argument("text embeddings do not match the decoder dimensions");
    }
    verb_embed_ = nn::Linear::create(store_, "head.verb_embed", 2 * c, c, rng);
    self_embed_ = nn::Linear::create(store_, "head.self_embed", 2 * c, c, rng);
    inter_embed_ = nn::Linear::create(store_, "head.inter_embed", c, c, rng);
    verb_bias_ = store_.add("head.verb_bias", Matrix::Constant(1, config_.num_verbs, kVerbPriorBias));
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix none(1, c);
    for (Eigen::Index i = 0; i < none.size(); ++i) none.data()[i] = dist(rng);
    no_object_ = store_.add("head.no_object", std::move(none));
    text_objects_ = store_.add("text.objects", text->objects.rowwise().normalized(), false);
    text_verbs_ = store_.add("text.verbs", text->verbs.rowwise().normalized(), false);
  }
  box_head_ = nn::Mlp::create(store_, "head.box", {c, c, c, 4}, rng);
  union_head_ = nn::Mlp::create(store_, "head.union", {2 * c, c, c}, rng);
  inter_object_head_ = nn::Mlp::create(store_, "head.inter_object", {c, c, c}, rng);
  inter_human_head_ = nn::Mlp::create(store_, "head.inter_human", {2 * c, c, c}, rng);
}

Var HoiDecoder::pd(nn::Binder& bind, const std::vector<Box>& boxes) const {
  Matrix enc(static_cast<Eigen::Index>(boxes.size()), config_.hidden + 2);
  for (size_t i = 0; i < boxes.size(); ++i) enc.row(static_cast<Eigen::Index>(i)) = pd_encoding(boxes[i], config_.hidden);
  return pd_proj_(bind, bind.tape().constant(std::move(enc)));
}

Var HoiDecoder::pc(nn::Binder& bind, const Var& queries, const std::vector<Box>& boxes) const {
  const int half = config_.hidden / 2;
  const auto n = static_cast<Eigen::Index>(boxes.size());
  Matrix phi_x(n, half), phi_y(n, half), inv_w(n, 1), inv_h(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Box& b = boxes[static_cast<size_t>(i)];
    phi_x.row(i) = sinusoid(b.cx, half);
    phi_y.row(i) = sinusoid(b.cy, half);
    inv_w(i, 0) = 1.0 / std::max(b.w, kBoxEps);
    inv_h(i, 0) = 1.0 / std::max(b.h, kBoxEps);
  }
  ag::Tape& t = bind.tape();
  const Var ref = ag::sigmoid(ref_mlp_(bind, queries));
  const Var sx = ag::mul(ag::slice_cols(ref, 0, 1), t.constant(std::move(inv_w)));
  const Var sy = ag::mul(ag::slice_cols(ref, 1, 1), t.constant(std::move(inv_h)));
  return ag::concat_cols({ag::mul(t.constant(std::move(phi_x)), broadcast_col(sx, half)),
                          ag::mul(t.constant(std::move(phi_y)), broadcast_col(sy, half))});
}

HeadVars HoiDecoder::heads(nn::Binder& bind, const Var& r_o, const Var& r_h, const Var& qd_o,
                           const Var& qd_h, const Var& fseg) const {
  HeadVars h;
  const Var r = ag::concat_rows({r_o, r_h});
  const Var rq = ag::concat_cols({r, ag::concat_rows({qd_o, qd_h})});
  const Var self_in = ag::concat_cols({r_o, qd_o});
  h.relation = r;
  if (config_.classifier == ClassifierMode::Linear) {
    h.verb_logits = verb_head_(bind, rq);
    h.class_logits = ag::concat_rows({self_head_(bind, self_in), inter_head_(bind, r_h)});
  } else {
    const double inv_t = 1.0 / config_.temperature;
    h.verb_embed = verb_embed_(bind, rq);
    h.verb_logits = ag::add_row(
        ag::scale(ag::matmul_nt(ag::normalize_rows(h.verb_embed), bind(text_verbs_)), inv_t), bind(verb_bias_));
    h.object_embed = ag::concat_rows({self_embed_(bind, self_in), inter_embed_(bind, r_h)});
    const Var bank = ag::concat_rows({bind(text_objects_), ag::normalize_rows(bind(no_object_))});
    h.class_logits = ag::scale(ag::matmul_nt(ag::normalize_rows(h.object_embed), bank), inv_t);
  }
  h.boxes = ag::sigmoid(box_head_(bind, r));
  h.union_embed = union_head_(bind, rq);
  h.union_logits = ag::matmul_nt(h.union_embed, fseg);
  const Var inter_embed = ag::concat_rows(
      {inter_object_head_(bind, ag::add(r_o, qd_o)), inter_human_head_(bind, ag::concat_cols({r_h, qd_h}))});
  h.inter_logits = ag::matmul_nt(inter_embed, fseg);
  return h;
}

std::vector<HeadVars> HoiDecoder::forward(nn::Binder& bind, const FoundationOutput& f,
                                          const QueryAlignment& a) const {
  if (f.hidden() != config_.hidden) throw std::invalid_argument("foundation width differs from decoder width");
  ag::Tape& t = bind.tape();
  const int c = config_.hidden;
  const Box pad_box{0.5, 0.5, 1.0, 1.0};

  auto gather = [&](const std::vector<int>& src, Matrix& qd, std::vector<Box>& boxes) {
    qd = Matrix::Zero(static_cast<Eigen::Index>(src.size()), c);
    boxes.clear();
    for (size_t i = 0; i < src.size(); ++i) {
      if (src[i] >= 0) {
        qd.row(static_cast<Eigen::Index>(i)) = f.queries.row(src[i]);
        boxes.push_back(f.boxes[static_cast<size_t>(src[i])]);
      } else {
        boxes.push_back(pad_box);
      }
    }
  };
  Matrix qd_o_m, qd_h_m;
  std::vector<Box> boxes_o, boxes_h;
  gather(a.object_source, qd_o_m, boxes_o);
  gather(a.human_source, qd_h_m, boxes_h);

  const Var qd_o = t.constant(std::move(qd_o_m));
  const Var qd_h = t.constant(std::move(qd_h_m));
  const Var replica = ag::gather_rows(bind(replica_embed_), a.human_replica);
  const Var p1_o = pd(bind, boxes_o);
  const Var p2_o = pc(bind, qd_o, boxes_o);
  const Var p1_h = ag::add(pd(bind, boxes_h), replica);
  const Var p2_h = ag::add(pc(bind, qd_h, boxes_h), replica);
  const Var fs = t.constant(f.flattened_features());
  const std::vector<bool> fs_valid(static_cast<size_t>(fs.rows()), true);
  const Var fseg = t.constant(f.pixel_embedding);

  const BranchParams& ob = object_branch_;
  const BranchParams& hb = human_branch_;
  Var q_o = qd_o;
  Var q_h = qd_h;
  std::vector<HeadVars> out;
  out.reserve(static_cast<size_t>(config_.layers));
  for (size_t l = 0; l < static_cast<size_t>(config_.layers); ++l) {
    const Var so = ag::add(q_o, p1_o);
    const Var sh = ag::add(q_h, p1_h);
    const Var x_o = ag::add(q_o, ob.self_attn[l](bind, so, so, q_o, a.object_valid));
    const Var x_h = ag::add(q_h, hb.self_attn[l](bind, sh, sh, q_h, a.human_valid));
    const Var co = ag::add(x_o, p2_o);
    const Var ch = ag::add(x_h, p2_h);
    const Var y_o = ag::add(x_o, ob.cross_attn[l](bind, co, ch, x_h, a.human_valid));
    const Var y_h = ag::add(x_h, hb.cross_attn[l](bind, ch, co, x_o, a.object_valid));
    q_o = ag::add(y_o, ob.backbone_attn[l](bind, ag::add(y_o, p2_o), fs, fs, fs_valid));
    q_h = ag::add(y_h, hb.backbone_attn[l](bind, ag::add(y_h, p2_h), fs, fs, fs_valid));
    out.push_back(heads(bind, ob.relation(bind, q_o), hb.relation(bind, q_h), qd_o, qd_h, fseg));
  }
  return out;
}

HeadOutputs HoiDecoder::infer(const FoundationOutput& f, const QueryAlignment& a) const {
  ag::Tape tape;
  nn::Binder bind(tape, store_, false);
  const auto layers = forward(bind, f, a);
  return to_values(layers.back(), a.object_rows());
}

Matrix HoiDecoder::pc_embedding(const Matrix& queries, const std::vector<Box>& boxes) const {
  ag::Tape tape;
  nn::Binder bind(tape, store_, false);
  return pc(bind, tape.constant(queries), boxes).value();
}

Matrix HoiDecoder::pd_embedding(const std::vector<Box>& boxes) const {
  ag::Tape tape;
  nn::Binder bind(tape, store_, false);
  return pd(bind, boxes).value();
}

}  // namespace seg2hoi
