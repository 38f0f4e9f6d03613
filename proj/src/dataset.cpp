#include "seg2hoi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace seg2hoi {

using json = nlohmann::json;

std::string to_string(DatasetFormat f) { return f == DatasetFormat::Hico ? "hico" : "vcoco"; }

DatasetFormat dataset_format_from_string(const std::string& s) {
  if (s == "hico") return DatasetFormat::Hico;
  if (s == "vcoco") return DatasetFormat::Vcoco;
  throw std::invalid_argument("unknown dataset format: " + s);
}

int HoiCategories::hoi_id(int verb, int object) const {
  for (size_t i = 0; i < hoi_classes.size(); ++i) {
    if (hoi_classes[i].verb == verb && hoi_classes[i].object == object) return static_cast<int>(i);
  }
  return -1;
}

bool HoiCategories::verb_has_object_role(int verb) const {
  if (verb_roles.empty()) return true;
  return verb_roles.at(static_cast<size_t>(verb)) != "none";
}

std::vector<int> HoiDataset::hoi_instance_counts() const {
  std::vector<int> counts(categories.hoi_classes.size(), 0);
  for (const auto& img : images) {
    for (const auto& h : img.hois) {
      if (h.object < 0) continue;
      const int obj = img.boxes[static_cast<size_t>(h.object)].category;
      const int id = categories.hoi_id(h.verb, obj);
      if (id >= 0) ++counts[static_cast<size_t>(id)];
    }
  }
  return counts;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key, std::vector<std::string>& errors) {
  std::vector<std::string> out;
  if (!j.contains(key) || !j[key].is_array()) {
    errors.push_back(std::string("missing array '") + key + "'");
    return out;
  }
  for (size_t i = 0; i < j[key].size(); ++i) {
    if (!j[key][i].is_string()) {
      errors.push_back(std::string(key) + "[" + std::to_string(i) + "]: expected a string");
      continue;
    }
    out.push_back(j[key][i].get<std::string>());
  }
  return out;
}

bool is_int(const json& j) { return j.is_number_integer(); }

}  // namespace

HoiDataset parse_annotations(const std::string& text, DatasetFormat format) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("annotation file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("annotation root must be an object");
  std::vector<std::string> errors;
  HoiDataset d;
  d.format = format;
  if (j.contains("format") && j["format"] != to_string(format)) {
    errors.push_back("format field '" + j["format"].dump() + "' does not match requested '" + to_string(format) + "'");
  }
  d.categories.objects = string_list(j, "objects", errors);
  d.categories.verbs = string_list(j, "verbs", errors);
  const int n_obj = static_cast<int>(d.categories.objects.size());
  const int n_verb = static_cast<int>(d.categories.verbs.size());
  if (j.contains("verb_roles")) {
    d.categories.verb_roles = string_list(j, "verb_roles", errors);
    if (static_cast<int>(d.categories.verb_roles.size()) != n_verb) errors.push_back("verb_roles length differs from verbs");
    for (size_t i = 0; i < d.categories.verb_roles.size(); ++i) {
      const auto& r = d.categories.verb_roles[i];
      if (r != "obj" && r != "instr" && r != "none") errors.push_back("verb_roles[" + std::to_string(i) + "]: unknown role " + r);
    }
  }
  if (j.contains("hoi_classes")) {
    const json& hc = j["hoi_classes"];
    for (size_t i = 0; i < hc.size(); ++i) {
      const json& e = hc[i];
      if (!e.is_object() || !e.contains("verb") || !e.contains("object") || !is_int(e["verb"]) || !is_int(e["object"])) {
        errors.push_back("hoi_classes[" + std::to_string(i) + "]: expected {verb, object}");
        continue;
      }
      HoiClass c{e["verb"].get<int>(), e["object"].get<int>()};
      if (c.verb < 0 || c.verb >= n_verb || c.object < 0 || c.object >= n_obj) {
        errors.push_back("hoi_classes[" + std::to_string(i) + "]: category out of range");
        continue;
      }
      if (d.categories.hoi_id(c.verb, c.object) >= 0) {
        errors.push_back("hoi_classes[" + std::to_string(i) + "]: duplicate (verb, object)");
        continue;
      }
      d.categories.hoi_classes.push_back(c);
    }
  } else if (format == DatasetFormat::Vcoco) {
    for (int v = 0; v < n_verb; ++v) {
      for (int o = 0; o < n_obj; ++o) d.categories.hoi_classes.push_back({v, o});
    }
  } else {
    errors.push_back("missing array 'hoi_classes'");
  }

  if (!j.contains("images") || !j["images"].is_array()) {
    errors.push_back("missing array 'images'");
  } else {
    const json& imgs = j["images"];
    for (size_t i = 0; i < imgs.size(); ++i) {
      const std::string where = "images[" + std::to_string(i) + "]";
      const json& im = imgs[i];
      if (!im.is_object() || !im.contains("file_name") || !im["file_name"].is_string() || !im.contains("width") ||
          !is_int(im["width"]) || !im.contains("height") || !is_int(im["height"])) {
        errors.push_back(where + ": expected file_name, width and height");
        continue;
      }
      ImageRecord rec;
      rec.file_name = im["file_name"].get<std::string>();
      rec.width = im["width"].get<int>();
      rec.height = im["height"].get<int>();
      if (rec.width <= 0 || rec.height <= 0) {
        errors.push_back(where + ": non-positive image size");
        continue;
      }
      const json anns = im.value("annotations", json::array());
      for (size_t a = 0; a < anns.size(); ++a) {
        const json& an = anns[a];
        const std::string aw = where + ".annotations[" + std::to_string(a) + "]";
        if (!an.is_object() || !an.contains("bbox") || !an["bbox"].is_array() || an["bbox"].size() != 4 ||
            !an.contains("category_id") || !is_int(an["category_id"])) {
          errors.push_back(aw + ": expected bbox [x0, y0, x1, y1] and category_id");
          continue;
        }
        double c[4];
        bool numeric = true;
        for (int k = 0; k < 4; ++k) {
          numeric = numeric && an["bbox"][static_cast<size_t>(k)].is_number();
          if (numeric) c[k] = an["bbox"][static_cast<size_t>(k)].get<double>();
        }
        if (!numeric || c[0] > c[2] || c[1] > c[3] || c[0] < 0 || c[1] < 0 || c[2] > rec.width || c[3] > rec.height) {
          errors.push_back(aw + ": bbox outside the image or inverted");
          continue;
        }
        const int cat = an["category_id"].get<int>();
        if (cat < -1 || cat >= n_obj) {
          errors.push_back(aw + ": category_id " + std::to_string(cat) + " out of range");
          continue;
        }
        rec.boxes.push_back({Box::from_corners(c[0] / rec.width, c[1] / rec.height, c[2] / rec.width, c[3] / rec.height), cat});
      }
      const json hois = im.value("hoi_annotation", json::array());
      for (size_t h = 0; h < hois.size(); ++h) {
        const json& ho = hois[h];
        const std::string hw = where + ".hoi_annotation[" + std::to_string(h) + "]";
        if (!ho.is_object() || !ho.contains("subject_id") || !is_int(ho["subject_id"]) || !ho.contains("object_id") ||
            !is_int(ho["object_id"]) || !ho.contains("category_id") || !is_int(ho["category_id"])) {
          errors.push_back(hw + ": expected subject_id, object_id and category_id");
          continue;
        }
        HoiAnnotation a{ho["subject_id"].get<int>(), ho["object_id"].get<int>(), ho["category_id"].get<int>()};
        const int nb = static_cast<int>(rec.boxes.size());
        if (a.subject < 0 || a.subject >= nb) {
          errors.push_back(hw + ": subject_id out of range");
          continue;
        }
        if (a.object >= nb || a.object < -1 || (a.object == -1 && format == DatasetFormat::Hico)) {
          errors.push_back(hw + ": object_id out of range");
          continue;
        }
        if (a.verb < 0 || a.verb >= n_verb) {
          errors.push_back(hw + ": category_id " + std::to_string(a.verb) + " out of range");
          continue;
        }
        if (a.object >= 0) {
          const int obj = rec.boxes[static_cast<size_t>(a.object)].category;
          if (obj < 0) {
            errors.push_back(hw + ": object box has no object category");
            continue;
          }
          if (format == DatasetFormat::Hico && d.categories.hoi_id(a.verb, obj) < 0) {
            errors.push_back(hw + ": (verb, object) pair is not in the HOI table");
            continue;
          }
        }
        rec.hois.push_back(a);
      }
      d.images.push_back(std::move(rec));
    }
  }
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "malformed annotations (" << errors.size() << " problems):";
    for (const auto& e : errors) msg << "\n  " << e;
    throw std::runtime_error(msg.str());
  }
  return d;
}

HoiDataset load_annotations(const std::string& path, DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str(), format);
}

std::string dump_annotations(const HoiDataset& d) {
  json j;
  j["format"] = to_string(d.format);
  j["objects"] = d.categories.objects;
  j["verbs"] = d.categories.verbs;
  if (!d.categories.verb_roles.empty()) j["verb_roles"] = d.categories.verb_roles;
  j["hoi_classes"] = json::array();
  for (const auto& c : d.categories.hoi_classes) j["hoi_classes"].push_back({{"verb", c.verb}, {"object", c.object}});
  j["images"] = json::array();
  for (const auto& img : d.images) {
    json im{{"file_name", img.file_name}, {"width", img.width}, {"height", img.height}};
    im["annotations"] = json::array();
    for (const auto& b : img.boxes) {
      const Corners c = b.box.corners();
      im["annotations"].push_back({{"bbox", {c.x_min * img.width, c.y_min * img.height, c.x_max * img.width, c.y_max * img.height}},
                                   {"category_id", b.category}});
    }
    im["hoi_annotation"] = json::array();
    for (const auto& h : img.hois) {
      im["hoi_annotation"].push_back({{"subject_id", h.subject}, {"object_id", h.object}, {"category_id", h.verb}});
    }
    j["images"].push_back(std::move(im));
  }
  return j.dump(1);
}

HoiCategories synth_categories() {
  HoiCategories c;
  c.objects = {"cup", "kite", "umbrella"};
  c.verbs = {"hold", "near", "over"};
  for (int v = 0; v < 3; ++v) {
    for (int o = 0; o < 3; ++o) c.hoi_classes.push_back({v, o});
  }
  return c;
}

namespace {

constexpr int kSynthSide = 64;
constexpr double kNearDistance = 6.0;

struct PixelSet {
  std::vector<std::pair<int, int>> px;
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
};

PixelSet pixels_of(const toy::Shape& s, int width, int height) {
  PixelSet p;
  p.x0 = width;
  p.y0 = height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!s.contains(x + 0.5, y + 0.5)) continue;
      p.px.emplace_back(x, y);
      p.x0 = std::min(p.x0, x);
      p.y0 = std::min(p.y0, y);
      p.x1 = std::max(p.x1, x);
      p.y1 = std::max(p.y1, y);
    }
  }
  return p;
}

double min_distance(const PixelSet& a, const PixelSet& b) {
  double best = 1e18;
  for (const auto& [ax, ay] : a.px) {
    for (const auto& [bx, by] : b.px) {
      const double dx = ax - bx;
      const double dy = ay - by;
      best = std::min(best, dx * dx + dy * dy);
    }
  }
  return std::sqrt(best);
}

bool inside_canvas(const toy::Shape& s) {
  const double hh = s.kind == toy::ShapeKind::Disk ? s.half_w : s.half_h;
  return s.cx - s.half_w >= 1.0 && s.cx + s.half_w <= kSynthSide - 1.0 && s.cy - hh >= 1.0 &&
         s.cy + hh <= kSynthSide - 1.0;
}

toy::ShapeKind kind_for_object(int object) {
  switch (object) {
    case 0: return toy::ShapeKind::Rectangle;
    case 1: return toy::ShapeKind::Diamond;
    default: return toy::ShapeKind::Triangle;
  }
}

toy::Shape random_object(std::mt19937_64& rng, int object, int color) {
  std::uniform_real_distribution<double> rect(4.0, 6.0);
  std::uniform_real_distribution<double> pointy(6.5, 8.5);
  toy::Shape s;
  s.kind = kind_for_object(object);
  s.color = color;
  if (s.kind == toy::ShapeKind::Rectangle) {
    s.half_w = rect(rng);
    s.half_h = rect(rng);
  } else {
    s.half_w = pointy(rng);
    s.half_h = pointy(rng);
  }
  return s;
}

}  // namespace

Box shape_extent(const toy::Shape& s, int width, int height) {
  const PixelSet p = pixels_of(s, width, height);
  if (p.px.empty()) return Box{s.cx / width, s.cy / height, 0.0, 0.0};
  return Box::from_corners(static_cast<double>(p.x0) / width, static_cast<double>(p.y0) / height,
                           static_cast<double>(p.x1 + 1) / width, static_cast<double>(p.y1 + 1) / height);
}

std::vector<bool> scripted_verbs(const toy::Shape& human, const toy::Shape& object, int width, int height) {
  const PixelSet h = pixels_of(human, width, height);
  const PixelSet o = pixels_of(object, width, height);
  const double d = min_distance(h, o);
  const bool overlap = d == 0.0;
  std::vector<bool> verbs(3, false);
  verbs[0] = overlap;
  verbs[1] = !overlap && d < kNearDistance;
  verbs[2] = !o.px.empty() && !h.px.empty() && o.y1 < h.y0 && std::abs(object.cx - human.cx) <= human.half_w;
  return verbs;
}

HoiDataset synth_dataset(std::uint64_t seed, int n_images) {
  if (n_images < 1) throw std::invalid_argument("synth_dataset needs at least one image");
  HoiDataset d;
  d.format = DatasetFormat::Hico;
  d.categories = synth_categories();
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double pi = std::acos(-1.0);

  for (int i = 0; i < n_images; ++i) {
    std::vector<int> colors(toy::kPaletteSize);
    for (int c = 0; c < toy::kPaletteSize; ++c) colors[static_cast<size_t>(c)] = c;
    std::shuffle(colors.begin(), colors.end(), rng);

    toy::Scene scene;
    scene.width = kSynthSide;
    scene.height = kSynthSide;
    toy::Shape human;
    toy::Shape first;
    std::vector<bool> first_verbs;
    int first_class = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw std::logic_error("synth_dataset: could not place a scripted pair");
      const int relation = static_cast<int>(unit(rng) * 3.0) % 3;
      human = toy::Shape{toy::ShapeKind::Disk, colors[0], 0, 0, 9.0 + 3.0 * unit(rng), 0.0};
      human.half_h = human.half_w;
      const double r = human.half_w;
      const double top_room = relation == 2 ? 16.0 : 2.0;
      human.cx = r + 2.0 + unit(rng) * (kSynthSide - 2 * r - 4.0);
      human.cy = r + top_room + unit(rng) * (kSynthSide - 2 * r - top_room - 2.0);
      first_class = static_cast<int>(unit(rng) * 3.0) % 3;
      first = random_object(rng, first_class, colors[1]);
      const double ext = std::max(first.half_w, first.half_h);
      if (relation == 2) {
        first.cx = human.cx + (unit(rng) - 0.5) * r;
        first.cy = human.cy - r - first.half_h - 1.0 - 5.0 * unit(rng);
      } else {
        const double angle = 2.0 * pi * unit(rng);
        const double dist = relation == 0 ? r + 0.5 * ext : r + ext + 2.0 + 2.0 * unit(rng);
        first.cx = human.cx + dist * std::cos(angle);
        first.cy = human.cy + dist * std::sin(angle);
      }
      if (!inside_canvas(human) || !inside_canvas(first)) continue;
      first_verbs = scripted_verbs(human, first, kSynthSide, kSynthSide);
      if (std::find(first_verbs.begin(), first_verbs.end(), true) != first_verbs.end()) break;
    }
    scene.shapes = {human, first};

    ImageRecord rec;
    rec.file_name = "synth-" + std::to_string(seed) + "-" + std::to_string(i) + ".png";
    rec.width = kSynthSide;
    rec.height = kSynthSide;
    rec.boxes.push_back({shape_extent(human, kSynthSide, kSynthSide), -1});
    rec.boxes.push_back({shape_extent(first, kSynthSide, kSynthSide), first_class});
    for (int v = 0; v < 3; ++v) {
      if (first_verbs[static_cast<size_t>(v)]) rec.hois.push_back({0, 1, v});
    }

    if (unit(rng) < 0.5) {
      const int second_class = static_cast<int>(unit(rng) * 3.0) % 3;
      toy::Shape second = random_object(rng, second_class, colors[2]);
      const PixelSet hp = pixels_of(human, kSynthSide, kSynthSide);
      const PixelSet fp = pixels_of(first, kSynthSide, kSynthSide);
      for (int attempt = 0; attempt < 200; ++attempt) {
        second.cx = 1.0 + second.half_w + unit(rng) * (kSynthSide - 2.0 - 2.0 * second.half_w);
        second.cy = 1.0 + second.half_h + unit(rng) * (kSynthSide - 2.0 - 2.0 * second.half_h);
        if (!inside_canvas(second)) continue;
        const PixelSet sp = pixels_of(second, kSynthSide, kSynthSide);
        if (min_distance(sp, fp) < 3.0 || min_distance(sp, hp) < 1.0) continue;
        scene.shapes.push_back(second);
        rec.boxes.push_back({shape_extent(second, kSynthSide, kSynthSide), second_class});
        const auto verbs = scripted_verbs(human, second, kSynthSide, kSynthSide);
        for (int v = 0; v < 3; ++v) {
          if (verbs[static_cast<size_t>(v)]) rec.hois.push_back({0, 2, v});
        }
        break;
      }
    }
    rec.scene = std::move(scene);
    d.images.push_back(std::move(rec));
  }
  return d;
}

std::vector<GroundTruthHOI> ground_truth_pairs(const ImageRecord& image, const HoiCategories& cats) {
  std::map<std::pair<int, int>, size_t> index;
  std::vector<GroundTruthHOI> out;
  for (const auto& h : image.hois) {
    if (h.object < 0) continue;
    const auto key = std::make_pair(h.subject, h.object);
    auto it = index.find(key);
    if (it == index.end()) {
      GroundTruthHOI g;
      g.human_box = image.boxes[static_cast<size_t>(h.subject)].box;
      g.object_box = image.boxes[static_cast<size_t>(h.object)].box;
      g.object_class = image.boxes[static_cast<size_t>(h.object)].category;
      g.verbs.assign(cats.verbs.size(), false);
      it = index.emplace(key, out.size()).first;
      out.push_back(std::move(g));
    }
    out[it->second].verbs[static_cast<size_t>(h.verb)] = true;
  }
  return out;
}

Image load_image(const ImageRecord& image, const std::string& root) {
  if (image.scene) return toy::render(*image.scene);
  const std::filesystem::path p = root.empty() ? std::filesystem::path(image.file_name)
                                               : std::filesystem::path(root) / image.file_name;
  return read_png(p.string());
}

std::vector<TrainingSample> build_samples(const HoiDataset& d, const FoundationModel& model,
                                          const PseudoLabelParams& params, const std::string& root) {
  std::vector<TrainingSample> out;
  out.reserve(d.images.size());
  for (size_t i = 0; i < d.images.size(); ++i) {
    TrainingSample s;
    s.image_index = static_cast<int>(i);
    s.foundation = model.extract(load_image(d.images[i], root));
    s.gts = ground_truth_pairs(d.images[i], d.categories);
    for (auto& g : s.gts) g.pseudo = generate_pseudo_label(s.foundation, g.human_box, g.object_box, params);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace seg2hoi
