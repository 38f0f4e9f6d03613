#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seg2hoi/decoder.hpp"

namespace seg2hoi {

/// Maps text to a fixed-width vector. Implementations must be deterministic.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Eigen::RowVectorXd embed(const std::string& text) const = 0;
  virtual int dim() const = 0;
  virtual std::string version() const = 0;
};

/// Bag-of-words embedder: registered words get rows of a seeded random
/// orthonormal basis, other words seeded random unit vectors. Stopwords are
/// dropped and "-ing" forms of registered words fold onto the base word.
class ToyEmbedder final : public TextEmbedder {
 public:
  ToyEmbedder(int dim, std::uint64_t seed, std::vector<std::string> vocabulary);

  Eigen::RowVectorXd embed(const std::string& text) const override;
  int dim() const override { return dim_; }
  std::string version() const override;

  Eigen::RowVectorXd word_vector(const std::string& word) const;
  std::vector<std::string> tokens(const std::string& text) const;

 private:
  int dim_;
  std::uint64_t seed_;
  std::vector<std::string> vocabulary_;
  Matrix basis_;
};

/// "hold" -> "holding", "ride" -> "riding", "sit" -> "sitting"; prepositions
/// stay as they are. Underscores become spaces and only the first word changes.
std::string gerund_phrase(const std::string& verb);
std::string object_sentence(const std::string& object);
std::string verb_sentence(const std::string& verb);
/// Natural-language prompt naming one interaction, e.g. "a person holding a cup".
std::string hoi_phrase(const std::string& verb, const std::string& object);
/// Words used by the templates and phrases of the given category names.
std::vector<std::string> template_vocabulary(const std::vector<std::string>& objects,
                                             const std::vector<std::string>& verbs);

struct TextClassifierBank {
  Matrix objects;  // N_obj x C, unit rows
  Matrix verbs;    // N_verb x C, unit rows
  std::vector<std::string> object_sentences;
  std::vector<std::string> verb_sentences;

  TextEmbeddings embeddings() const { return {objects, verbs}; }
};

TextClassifierBank build_text_bank(const std::vector<std::string>& objects, const std::vector<std::string>& verbs,
                                   const TextEmbedder& embedder);

/// Row-wise cosine similarity; rows with norm below eps compare as 0.
Matrix similarity_logits(const Matrix& e, const Matrix& bank, double eps = 1e-12);

/// argmax_i cos(E_U[i], prompt); ties to the lowest index. Rows with
/// candidates[i] == false are skipped (an empty candidate list allows all).
int retrieve_visual(const Eigen::RowVectorXd& prompt, const Matrix& union_embed,
                    const std::vector<bool>& candidates = {});
/// argmax_i cos(E_o[i], prompt) * cos(E_v[i], prompt); ties to the lowest index.
int retrieve_text(const Eigen::RowVectorXd& prompt, const Matrix& object_embed, const Matrix& verb_embed,
                  const std::vector<bool>& candidates = {});

/// Mean of f_seg over the distinct cells under the given pixel points.
Eigen::RowVectorXd visual_prompt_embedding(const Matrix& pixel_embedding, int grid_height, int grid_width,
                                           int image_width, int image_height,
                                           const std::vector<std::pair<int, int>>& points);

}  // namespace seg2hoi
