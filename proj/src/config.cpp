#include "seg2hoi/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "seg2hoi/evaluation.hpp"

namespace seg2hoi {

double ScheduleConfig::lr_at(int epoch) const {
  double lr_now = lr;
  for (int d : lr_drops) {
    if (epoch >= d) lr_now /= lr_drop_factor;
  }
  return lr_now;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return out;
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int<int>(key, item));
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define S2H_DOUBLE(KEY, MEMBER)                                                   \
  Field {                                                                         \
    KEY, [](const TrainConfig& c) { return fmt_double(c.MEMBER); },               \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); } \
  }
#define S2H_INT(KEY, MEMBER)                                                                        \
  Field {                                                                                           \
    KEY, [](const TrainConfig& c) { return std::to_string(c.MEMBER); },                             \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_int<decltype(c.MEMBER)>(KEY, v); } \
  }
#define S2H_BOOL(KEY, MEMBER)                                                      \
  Field {                                                                          \
    KEY, [](const TrainConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }    \
  }
#define S2H_INT_LIST(KEY, MEMBER)                                                  \
  Field {                                                                          \
    KEY, [](const TrainConfig& c) { return fmt_int_list(c.MEMBER); },              \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_int_list(KEY, v); } \
  }
#define S2H_STRING(KEY, MEMBER)                                                    \
  Field {                                                                          \
    KEY, [](const TrainConfig& c) { return c.MEMBER; },                            \
        [](TrainConfig& c, const std::string& v) { c.MEMBER = v; }                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      S2H_STRING("data.source", data.source),
      S2H_STRING("data.format", data.format),
      S2H_STRING("data.root", data.root),
      S2H_INT("data.synth_seed", data.synth_seed),
      S2H_INT("data.synth_images", data.synth_images),
      S2H_STRING("data.cache_dir", data.cache_dir),
      S2H_STRING("data.zero_shot", data.zero_shot),
      S2H_INT_LIST("data.unseen_objects", data.unseen_objects),
      S2H_INT("data.unseen_count", data.unseen_count),
      S2H_INT("foundation.hidden", foundation.hidden),
      S2H_INT("foundation.top_k", foundation.top_k),
      S2H_INT("foundation.seed", foundation.seed),
      S2H_INT("decoder.heads", decoder.heads),
      S2H_INT("decoder.layers", decoder.layers),
      S2H_INT("decoder.object_queries", decoder.object_queries),
      S2H_INT("decoder.human_replicas", decoder.human_replicas),
      S2H_INT("decoder.human_slots", decoder.human_slots),
      S2H_BOOL("decoder.pad_human_slots", decoder.pad_human_slots),
      Field{"decoder.classifier", [](const TrainConfig& c) { return to_string(c.decoder.classifier); },
            [](TrainConfig& c, const std::string& v) { c.decoder.classifier = classifier_mode_from_string(v); }},
      S2H_DOUBLE("decoder.temperature", decoder.temperature),
      S2H_INT("decoder.seed", decoder.seed),
      S2H_INT("train.epochs", train.epochs),
      S2H_INT("train.max_steps", train.max_steps),
      S2H_DOUBLE("train.lr", train.lr),
      S2H_INT_LIST("train.lr_drops", train.lr_drops),
      S2H_DOUBLE("train.lr_drop_factor", train.lr_drop_factor),
      S2H_INT("train.batch_size", train.batch_size),
      S2H_DOUBLE("train.weight_decay", train.weight_decay),
      S2H_INT("train.seed", train.seed),
      S2H_STRING("train.log_path", train.log_path),
      S2H_STRING("train.checkpoint", train.checkpoint),
      S2H_DOUBLE("pseudo.gamma", pseudo.gamma),
      S2H_DOUBLE("pseudo.beta_b", pseudo.beta_b),
      S2H_DOUBLE("pseudo.beta_u", pseudo.beta_u),
      S2H_DOUBLE("cost.verb", cost.verb),
      S2H_DOUBLE("cost.class", cost.cls),
      S2H_DOUBLE("cost.box", cost.box),
      S2H_DOUBLE("cost.giou", cost.giou),
      S2H_DOUBLE("cost.mask_union", cost.mask_union),
      S2H_DOUBLE("cost.mask_inter", cost.mask_inter),
      S2H_BOOL("cost.match_intersection", cost.match_intersection),
      S2H_DOUBLE("loss.verb", loss.verb),
      S2H_DOUBLE("loss.class", loss.cls),
      S2H_DOUBLE("loss.box", loss.box),
      S2H_DOUBLE("loss.giou", loss.giou),
      S2H_DOUBLE("loss.mask_union", loss.mask_union),
      S2H_DOUBLE("loss.mask_inter", loss.mask_inter),
      S2H_DOUBLE("loss.focal_alpha", loss.focal_alpha),
      S2H_DOUBLE("loss.focal_gamma", loss.focal_gamma),
      S2H_DOUBLE("loss.no_object_weight", loss.no_object_weight),
      S2H_BOOL("loss.union_masks", loss.union_masks),
      S2H_BOOL("loss.intersection_masks", loss.intersection_masks),
      S2H_INT("loss.mask_points", loss.mask_points),
      S2H_STRING("eval.source", eval.source),
      S2H_STRING("eval.root", eval.root),
      S2H_INT("eval.synth_seed", eval.synth_seed),
      S2H_DOUBLE("eval.lambda", eval.lambda),
      S2H_INT("eval.top_k", eval.top_k),
      S2H_DOUBLE("eval.score_floor", eval.score_floor),
      S2H_INT("embedder.seed", embedder_seed),
  };
  return f;
}

#undef S2H_DOUBLE
#undef S2H_INT
#undef S2H_BOOL
#undef S2H_STRING
#undef S2H_INT_LIST

}  // namespace

void TrainConfig::validate() const {
  if (data.source.empty()) throw std::invalid_argument("data.source must be set");
  if (data.format != "hico" && data.format != "vcoco") throw std::invalid_argument("data.format must be hico or vcoco");
  if (data.synth_images < 1) throw std::invalid_argument("data.synth_images must be positive");
  if (train.epochs < 0 || train.max_steps < 0) throw std::invalid_argument("train.epochs and train.max_steps must be non-negative");
  if (!(train.lr > 0.0) || !(train.lr_drop_factor > 0.0) || train.batch_size < 1 || train.weight_decay < 0.0) {
    throw std::invalid_argument("train.lr, train.lr_drop_factor and train.batch_size must be positive");
  }
  if (pseudo.gamma < 0.0) throw std::invalid_argument("pseudo.gamma must be non-negative");
  if (loss.mask_points < 1) throw std::invalid_argument("loss.mask_points must be positive");
  if (eval.lambda < 0.0 || eval.lambda > 1.0) throw std::invalid_argument("eval.lambda must lie in [0, 1]");
  if (eval.top_k < 1) throw std::invalid_argument("eval.top_k must be positive");
  if (!data.zero_shot.empty() && data.zero_shot != "none") {
    const ZeroShotType t = zero_shot_type_from_string(data.zero_shot);
    if (t == ZeroShotType::UnseenObject && data.unseen_objects.empty()) {
      throw std::invalid_argument("data.zero_shot = uo needs data.unseen_objects");
    }
    if (t != ZeroShotType::UnseenObject && data.unseen_count < 1) {
      throw std::invalid_argument("data.unseen_count must be positive");
    }
  }
  DecoderConfig d = decoder;
  d.hidden = foundation.hidden;
  d.validate();
}

TrainConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw std::invalid_argument("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second->set(c, value);
  }
  c.decoder.hidden = c.foundation.hidden;
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& c) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

bool operator==(const TrainConfig& a, const TrainConfig& b) { return format_config(a) == format_config(b); }

}  // namespace seg2hoi
