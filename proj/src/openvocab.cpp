#include "seg2hoi/openvocab.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace seg2hoi {

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words{"a", "an", "the", "of", "and", "to", "is", "are", "with"};
  return words;
}

const std::set<std::string>& prepositions() {
  static const std::set<std::string> words{"near", "over", "under", "on", "in", "above", "below", "beside", "behind"};
  return words;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

std::string gerund(const std::string& w) {
  if (w.empty() || prepositions().count(w)) return w;
  if (w.size() >= 2 && w.compare(w.size() - 2, 2, "ie") == 0) return w.substr(0, w.size() - 2) + "ying";
  if (w.size() >= 2 && w.back() == 'e' && w[w.size() - 2] != 'e' && w[w.size() - 2] != 'y' && w[w.size() - 2] != 'o') {
    return w.substr(0, w.size() - 1) + "ing";
  }
  const size_t n = w.size();
  if (n >= 3 && n <= 4 && !is_vowel(w[n - 1]) && w[n - 1] != 'w' && w[n - 1] != 'x' && w[n - 1] != 'y' &&
      is_vowel(w[n - 2]) && !is_vowel(w[n - 3])) {
    return w + w.back() + "ing";
  }
  return w + "ing";
}

std::string spaced(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

}  // namespace

ToyEmbedder::ToyEmbedder(int dim, std::uint64_t seed, std::vector<std::string> vocabulary)
    : dim_(dim), seed_(seed) {
  if (dim <= 0) throw std::invalid_argument("embedder dimension must be positive");
  for (auto& w : vocabulary) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(vocabulary_.begin(), vocabulary_.end(), w) == vocabulary_.end()) vocabulary_.push_back(w);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = dist(rng);
  basis_ = Eigen::HouseholderQR<Matrix>(g).householderQ();
}

std::string ToyEmbedder::version() const {
  return "toy-embedder/1 dim=" + std::to_string(dim_) + " seed=" + std::to_string(seed_) +
         " vocab=" + std::to_string(vocabulary_.size());
}

std::vector<std::string> ToyEmbedder::tokens(const std::string& text) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stopwords().count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Eigen::RowVectorXd ToyEmbedder::word_vector(const std::string& word) const {
  auto lookup = [&](const std::string& w) -> Eigen::Index {
    const auto it = std::find(vocabulary_.begin(), vocabulary_.end(), w);
    return it == vocabulary_.end() ? -1 : it - vocabulary_.begin();
  };
  Eigen::Index idx = lookup(word);
  if (idx < 0) {
    for (const auto& base : vocabulary_) {
      if (gerund(base) == word) {
        idx = lookup(base);
        break;
      }
    }
  }
  if (idx >= 0 && idx < dim_) return basis_.row(idx);
  std::mt19937_64 rng(seed_ ^ fnv1a(idx >= 0 ? vocabulary_[static_cast<size_t>(idx)] : word));
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::RowVectorXd v(dim_);
  for (int i = 0; i < dim_; ++i) v(i) = dist(rng);
  return v.normalized();
}

Eigen::RowVectorXd ToyEmbedder::embed(const std::string& text) const {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim_);
  for (const auto& t : tokens(text)) sum += word_vector(t);
  const double n = sum.norm();
  return n > 1e-12 ? Eigen::RowVectorXd(sum / n) : sum;
}

std::string gerund_phrase(const std::string& verb) {
  const std::string s = spaced(verb);
  const auto space = s.find(' ');
  if (space == std::string::npos) return gerund(s);
  return gerund(s.substr(0, space)) + s.substr(space);
}

std::string object_sentence(const std::string& object) { return "A photo of a person and a/an " + spaced(object); }

std::string verb_sentence(const std::string& verb) { return "A photo of a person " + gerund_phrase(verb); }

std::string hoi_phrase(const std::string& verb, const std::string& object) {
  return "a person " + gerund_phrase(verb) + " a " + spaced(object);
}

std::vector<std::string> template_vocabulary(const std::vector<std::string>& objects,
                                             const std::vector<std::string>& verbs) {
  std::vector<std::string> vocab{"photo", "person"};
  auto add_words = [&](const std::string& name) {
    std::istringstream ss(spaced(name));
    std::string w;
    while (ss >> w) {
      if (!stopwords().count(w) && std::find(vocab.begin(), vocab.end(), w) == vocab.end()) vocab.push_back(w);
    }
  };
  for (const auto& o : objects) add_words(o);
  for (const auto& v : verbs) add_words(v);
  return vocab;
}

TextClassifierBank build_text_bank(const std::vector<std::string>& objects, const std::vector<std::string>& verbs,
                                   const TextEmbedder& embedder) {
  if (objects.empty() || verbs.empty()) throw std::invalid_argument("text bank needs object and verb names");
  TextClassifierBank b;
  b.objects.resize(static_cast<Eigen::Index>(objects.size()), embedder.dim());
  b.verbs.resize(static_cast<Eigen::Index>(verbs.size()), embedder.dim());
  for (size_t i = 0; i < objects.size(); ++i) {
    b.object_sentences.push_back(object_sentence(objects[i]));
    b.objects.row(static_cast<Eigen::Index>(i)) = embedder.embed(b.object_sentences.back()).normalized();
  }
  for (size_t i = 0; i < verbs.size(); ++i) {
    b.verb_sentences.push_back(verb_sentence(verbs[i]));
    b.verbs.row(static_cast<Eigen::Index>(i)) = embedder.embed(b.verb_sentences.back()).normalized();
  }
  return b;
}

Matrix similarity_logits(const Matrix& e, const Matrix& bank, double eps) {
  if (e.cols() != bank.cols()) throw std::invalid_argument("similarity_logits: width mismatch");
  Matrix en = e;
  Matrix bn = bank;
  for (Eigen::Index r = 0; r < en.rows(); ++r) {
    const double n = en.row(r).norm();
    en.row(r) = n > eps ? Eigen::RowVectorXd(en.row(r) / n) : Eigen::RowVectorXd::Zero(en.cols());
  }
  for (Eigen::Index r = 0; r < bn.rows(); ++r) {
    const double n = bn.row(r).norm();
    bn.row(r) = n > eps ? Eigen::RowVectorXd(bn.row(r) / n) : Eigen::RowVectorXd::Zero(bn.cols());
  }
  return (en * bn.transpose()).cwiseMax(-1.0).cwiseMin(1.0);
}

int retrieve_visual(const Eigen::RowVectorXd& prompt, const Matrix& union_embed, const std::vector<bool>& candidates) {
  const Eigen::VectorXd sim = similarity_logits(union_embed, prompt).col(0);
  int best = -1;
  for (Eigen::Index i = 0; i < sim.size(); ++i) {
    if (!candidates.empty() && !candidates[static_cast<size_t>(i)]) continue;
    if (best < 0 || sim(i) > sim(best)) best = static_cast<int>(i);
  }
  return best < 0 ? 0 : best;
}

int retrieve_text(const Eigen::RowVectorXd& prompt, const Matrix& object_embed, const Matrix& verb_embed,
                  const std::vector<bool>& candidates) {
  const Eigen::VectorXd so = similarity_logits(object_embed, prompt).col(0);
  const Eigen::VectorXd sv = similarity_logits(verb_embed, prompt).col(0);
  int best = -1;
  double best_score = 0.0;
  for (Eigen::Index i = 0; i < so.size(); ++i) {
    if (!candidates.empty() && !candidates[static_cast<size_t>(i)]) continue;
    const double s = so(i) * sv(i);
    if (best < 0 || s > best_score) {
      best = static_cast<int>(i);
      best_score = s;
    }
  }
  return best < 0 ? 0 : best;
}

Eigen::RowVectorXd visual_prompt_embedding(const Matrix& pixel_embedding, int grid_height, int grid_width,
                                           int image_width, int image_height,
                                           const std::vector<std::pair<int, int>>& points) {
  if (points.empty()) throw std::invalid_argument("visual prompt needs at least one point");
  std::set<int> cells;
  for (const auto& [x, y] : points) {
    if (x < 0 || y < 0 || x >= image_width || y >= image_height) throw std::out_of_range("prompt point outside the image");
    const int col = static_cast<int>(static_cast<long long>(x) * grid_width / image_width);
    const int row = static_cast<int>(static_cast<long long>(y) * grid_height / image_height);
    cells.insert(row * grid_width + col);
  }
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(pixel_embedding.cols());
  for (int c : cells) sum += pixel_embedding.row(c);
  return sum / static_cast<double>(cells.size());
}

}  // namespace seg2hoi
