#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seg2hoi/foundation.hpp"
#include "seg2hoi/nn.hpp"

namespace seg2hoi {

enum class ClassifierMode { Linear, Text };

std::string to_string(ClassifierMode mode);
ClassifierMode classifier_mode_from_string(const std::string& s);

struct DecoderConfig {
  int hidden = 32;
  int heads = 4;
  int layers = 6;
  int object_queries = 8;
  int human_replicas = 4;
  int human_slots = 60;
  /// Pad the human branch to `human_slots` rows. Off trims it to the valid rows,
  /// which yields identical valid-row outputs at lower cost.
  bool pad_human_slots = false;
  int num_verbs = 3;
  int num_objects = 3;
  ClassifierMode classifier = ClassifierMode::Text;
  double temperature = 0.07;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Frozen text embeddings used by the similarity classifiers (rows unit-norm).
struct TextEmbeddings {
  Matrix objects;  // N_obj x C_d
  Matrix verbs;    // N_verb x C_d
};

/// Which foundation query feeds every decoder slot. Object rows come first in
/// every per-row output, followed by human rows.
struct QueryAlignment {
  std::vector<int> object_source;  // -1 for padding
  std::vector<int> human_source;   // -1 for padding
  std::vector<int> human_replica;  // replica index 0..R-1, 0 for padding
  std::vector<bool> object_valid;
  std::vector<bool> human_valid;

  int object_rows() const { return static_cast<int>(object_source.size()); }
  int human_rows() const { return static_cast<int>(human_source.size()); }
  int rows() const { return object_rows() + human_rows(); }
  bool valid(int row) const;
  int source(int row) const;
  bool is_human_row(int row) const { return row >= object_rows(); }
};

QueryAlignment align_queries(const FoundationOutput& f, const DecoderConfig& cfg);

/// Sinusoid of a scalar in [0, 1] over `channels` interleaved (sin, cos) pairs,
/// base temperature 10000, argument scaled by 2*pi.
Eigen::RowVectorXd sinusoid(double v, int channels);
/// Pre-projection input of P_d: [phi(cx), phi(cy), w, h].
Eigen::RowVectorXd pd_encoding(const Box& b, int hidden);

/// Per-layer head outputs on the tape.
struct HeadVars {
  ag::Var verb_logits;     // N_f x N_verb
  ag::Var class_logits;    // N_f x (N_obj + 1), object rows use the self head
  ag::Var boxes;           // N_f x 4 counterpart boxes (cx, cy, w, h)
  ag::Var union_logits;    // N_f x cells
  ag::Var inter_logits;    // N_f x cells
  ag::Var verb_embed;      // N_f x C (text mode only)
  ag::Var object_embed;    // N_f x C (text mode only)
  ag::Var union_embed;     // N_f x C
  ag::Var relation;        // N_f x C
};

/// Values of the final layer's heads plus the embeddings used for retrieval.
struct HeadOutputs {
  int object_rows = 0;
  Matrix verb_logits;
  Matrix class_logits;
  Matrix boxes;
  Matrix union_logits;
  Matrix inter_logits;
  Matrix verb_embed;
  Matrix object_embed;
  Matrix union_embed;
  Matrix relation;

  Matrix self_class() const { return class_logits.topRows(object_rows); }
  Matrix inter_class() const { return class_logits.bottomRows(class_logits.rows() - object_rows); }
};

HeadOutputs to_values(const HeadVars& v, int object_rows);

class HoiDecoder {
 public:
  explicit HoiDecoder(DecoderConfig config, std::optional<TextEmbeddings> text = std::nullopt);

  const DecoderConfig& config() const { return config_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }
  bool has_text_heads() const { return config_.classifier == ClassifierMode::Text; }

  QueryAlignment align(const FoundationOutput& f) const { return align_queries(f, config_); }
  /// Runs every layer and returns the heads after each one (last = final).
  std::vector<HeadVars> forward(nn::Binder& bind, const FoundationOutput& f, const QueryAlignment& a) const;
  HeadOutputs infer(const FoundationOutput& f, const QueryAlignment& a) const;
  HeadOutputs infer(const FoundationOutput& f) const { return infer(f, align(f)); }

  /// P_c for the given boxes and queries, evaluated with the current weights.
  Matrix pc_embedding(const Matrix& queries, const std::vector<Box>& boxes) const;
  Matrix pd_embedding(const std::vector<Box>& boxes) const;

 private:
  struct BranchParams {
    std::vector<nn::MultiHeadAttention> self_attn;
    std::vector<nn::MultiHeadAttention> cross_attn;
    std::vector<nn::MultiHeadAttention> backbone_attn;
    nn::Mlp relation;
  };

  ag::Var pd(nn::Binder& bind, const std::vector<Box>& boxes) const;
  ag::Var pc(nn::Binder& bind, const ag::Var& queries, const std::vector<Box>& boxes) const;
  HeadVars heads(nn::Binder& bind, const ag::Var& r_o, const ag::Var& r_h, const ag::Var& qd_o,
                 const ag::Var& qd_h, const ag::Var& fseg) const;

  DecoderConfig config_;
  nn::ParameterStore store_;
  nn::Linear pd_proj_;
  nn::Mlp ref_mlp_;
  nn::ParamId replica_embed_ = 0;
  BranchParams object_branch_;
  BranchParams human_branch_;
  // Linear classifier heads.
  nn::Linear verb_head_, self_head_, inter_head_;
  // Similarity classifier heads.
  nn::Linear verb_embed_, self_embed_, inter_embed_;
  nn::ParamId verb_bias_ = 0, no_object_ = 0, text_objects_ = 0, text_verbs_ = 0;
  nn::Mlp box_head_, union_head_, inter_object_head_, inter_human_head_;
};

}  // namespace seg2hoi
