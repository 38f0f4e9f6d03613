#include "seg2hoi/foundation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "seg2hoi/binary_io.hpp"
#include "seg2hoi/digest.hpp"
#include "seg2hoi/toyworld.hpp"

namespace seg2hoi {

namespace {

constexpr int kColors = toy::kPaletteSize;
constexpr int kBiasChannel = kColors;          // constant-1 channel shared by q and f_seg
constexpr int kClassOffset = kColors + 1;      // class one-hot inside Q_d
constexpr int kNumInstClasses = 5;             // human, cup, kite, umbrella, background
constexpr int kBoxOffset = kClassOffset + kNumInstClasses;
constexpr int kShapeOffset = kBoxOffset + 4;
constexpr int kFixedQueryChannels = kShapeOffset + 3;
constexpr int kCellInputs = kColors + 1 + 8 + 1;  // fractions, background, position, bias
constexpr double kMaskGain = 8.0;
constexpr double kColorTolerance2 = 70.0 * 70.0;

Matrix random_projection(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

int palette_index(const std::uint8_t* px) {
  int best = -1;
  double best_d = kColorTolerance2;
  for (int c = 0; c < kColors; ++c) {
    const auto& p = toy::kPalette[static_cast<size_t>(c)];
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double diff = static_cast<double>(px[k]) - p[static_cast<size_t>(k)];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void positional_features(double x, double y, double* out) {
  const double pi = std::numbers::pi;
  int k = 0;
  for (double v : {x, y}) {
    for (double f : {1.0, 2.0}) {
      out[k++] = std::sin(pi * f * v);
      out[k++] = std::cos(pi * f * v);
    }
  }
}

struct Instance {
  int color = 0;
  int cls = 0;
  int area = 0;
  Box box;
  double fill = 0.0;
  double aspect = 0.0;
};

// Best IoU between the pixel set and each shape kind inscribed in its bounding box.
int classify_shape(const std::vector<int>& xs, const std::vector<int>& ys, int x0, int y0, int bw,
                   int bh) {
  std::vector<std::uint8_t> on(static_cast<size_t>(bw) * bh, 0);
  for (size_t i = 0; i < xs.size(); ++i) on[static_cast<size_t>(ys[i] - y0) * bw + (xs[i] - x0)] = 1;
  const toy::ShapeKind kinds[] = {toy::ShapeKind::Disk, toy::ShapeKind::Rectangle, toy::ShapeKind::Triangle,
                                  toy::ShapeKind::Diamond};
  int best = toy::class_of(toy::ShapeKind::Disk);
  double best_iou = -1.0;
  for (toy::ShapeKind kind : kinds) {
    const toy::Shape tmpl{kind, 0, bw / 2.0, bh / 2.0, bw / 2.0, bh / 2.0};
    int inter = 0, uni = 0;
    for (int y = 0; y < bh; ++y) {
      for (int x = 0; x < bw; ++x) {
        const bool a = on[static_cast<size_t>(y) * bw + x] != 0;
        bool b = false;
        if (kind == toy::ShapeKind::Disk) {
          const double u = (x + 0.5 - bw / 2.0) / (bw / 2.0);
          const double v = (y + 0.5 - bh / 2.0) / (bh / 2.0);
          b = u * u + v * v <= 1.0;
        } else {
          b = tmpl.contains(x + 0.5, y + 0.5);
        }
        inter += a && b;
        uni += a || b;
      }
    }
    const double score = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
    if (score > best_iou) {
      best_iou = score;
      best = toy::class_of(kind);
    }
  }
  // Small diamonds rasterize close to disks. A fifth of the way in from each
  // side a disk spans ~80% of the box while a diamond spans ~40%.
  if (best == toy::class_of(toy::ShapeKind::Disk) && bw >= 5 && bh >= 5) {
    auto span = [&](int x, int y, int dx, int dy, int n) {
      int count = 0;
      for (int i = 0; i < n; ++i) count += on[static_cast<size_t>(y + i * dy) * bw + (x + i * dx)];
      return static_cast<double>(count) / n;
    };
    const int ry = static_cast<int>(std::lround(0.2 * (bh - 1)));
    const int rx = static_cast<int>(std::lround(0.2 * (bw - 1)));
    const double widest = std::max({span(0, ry, 1, 0, bw), span(0, bh - 1 - ry, 1, 0, bw),
                                    span(rx, 0, 0, 1, bh), span(bw - 1 - rx, 0, 0, 1, bh)});
    if (widest < 0.6) best = toy::class_of(toy::ShapeKind::Diamond);
  }
  return best;
}

}  // namespace

int FoundationOutput::predicted_class(int query) const {
  Eigen::Index best = 0;
  class_logits.row(query).maxCoeff(&best);
  return static_cast<int>(best);
}

double FoundationOutput::max_foreground_logit(int query) const {
  return class_logits.row(query).head(class_logits.cols() - 1).maxCoeff();
}

BinaryMask FoundationOutput::instance_mask(int query) const {
  const Eigen::RowVectorXd row = mask_logits.row(query);
  return BinaryMask::from_logits(std::span<const double>(row.data(), static_cast<size_t>(row.size())),
                                 grid_height, grid_width);
}

Matrix FoundationOutput::flattened_features() const {
  Eigen::Index rows = 0;
  for (const auto& l : levels) rows += l.features.rows();
  Matrix out(rows, hidden());
  Eigen::Index at = 0;
  for (const auto& l : levels) {
    out.middleRows(at, l.features.rows()) = l.features;
    at += l.features.rows();
  }
  return out;
}

void FoundationOutput::validate() const {
  const auto n = queries.rows();
  if (static_cast<Eigen::Index>(boxes.size()) != n || class_logits.rows() != n || mask_logits.rows() != n) {
    throw std::logic_error("foundation output: query-indexed arrays disagree on N_k");
  }
  if (mask_logits.cols() != cells() || pixel_embedding.rows() != cells()) {
    throw std::logic_error("foundation output: mask and pixel embedding grids disagree");
  }
  if (pixel_embedding.cols() != queries.cols()) {
    throw std::logic_error("foundation output: pixel embedding width differs from query width");
  }
  for (const auto& l : levels) {
    if (l.features.rows() != static_cast<Eigen::Index>(l.height) * l.width || l.features.cols() != queries.cols()) {
      throw std::logic_error("foundation output: malformed feature level");
    }
  }
  if (static_cast<Eigen::Index>(class_names.size()) != class_logits.cols()) {
    throw std::logic_error("foundation output: class name count differs from class logits");
  }
  for (const Box& b : boxes) {
    if (!b.valid()) throw std::logic_error("foundation output: invalid instance box");
  }
}

Eigen::RowVectorXd instance_mask_from_query(const Eigen::RowVectorXd& query, const Matrix& projection,
                                            const Matrix& pixel_embedding) {
  return (query * projection) * pixel_embedding.transpose();
}

ToyFoundation::ToyFoundation(ToyFoundationConfig config) : config_(config) {
  if (config_.hidden < kFixedQueryChannels + 3) {
    throw std::invalid_argument("toy foundation hidden size must be at least " +
                                std::to_string(kFixedQueryChannels + 3));
  }
  if (config_.top_k <= 0) throw std::invalid_argument("top_k must be positive");
  const int c = config_.hidden;
  std::mt19937_64 rng(config_.seed);
  query_proj_ = random_projection(rng, kFixedQueryChannels, c - kFixedQueryChannels);
  pixel_proj_ = random_projection(rng, kCellInputs, c - kColors - 1);
  level0_proj_ = random_projection(rng, kCellInputs, c);
  level1_proj_ = random_projection(rng, kCellInputs, c);
  mask_projection_ = Matrix::Zero(c, c);
  for (int k = 0; k < kColors; ++k) mask_projection_(k, k) = kMaskGain;
  mask_projection_(kBiasChannel, kBiasChannel) = -kMaskGain / 2.0;
}

const std::vector<std::string>& ToyFoundation::class_names() const { return toy::class_names(); }

std::string ToyFoundation::parameter_hash() const {
  Sha256 h;
  std::ostringstream header;
  header << "toy-foundation/1 hidden=" << config_.hidden << " top_k=" << config_.top_k
         << " seed=" << config_.seed << " min_area=" << config_.min_component_area;
  h.update(header.str());
  for (const auto& p : toy::kPalette) h.update(std::span<const std::uint8_t>(p.data(), p.size()));
  for (const Matrix* m : {&query_proj_, &pixel_proj_, &level0_proj_, &level1_proj_, &mask_projection_}) {
    h.update(std::span<const double>(m->data(), static_cast<size_t>(m->size())));
  }
  return h.finish();
}

FoundationOutput ToyFoundation::extract(const Image& image) const {
  if (image.width <= 0 || image.height <= 0 || image.width % 4 != 0 || image.height % 4 != 0) {
    throw std::invalid_argument("image dimensions must be positive multiples of 4");
  }
  if (image.width > config_.max_side || image.height > config_.max_side) {
    throw std::invalid_argument("image exceeds the maximum supported side");
  }
  const int c = config_.hidden;
  const int gh = image.height / 4;
  const int gw = image.width / 4;
  const int cells = gh * gw;

  // Per-pixel palette labels and per-cell color fractions.
  std::vector<int> label(static_cast<size_t>(image.width) * image.height);
  Matrix fractions = Matrix::Zero(cells, kColors + 1);  // last column: background
  std::vector<std::vector<int>> xs(kColors), ys(kColors);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int l = palette_index(image.pixel(x, y));
      label[static_cast<size_t>(y) * image.width + x] = l;
      const int cell = (y / 4) * gw + x / 4;
      fractions(cell, l < 0 ? kColors : l) += 1.0 / 16.0;
      if (l >= 0) {
        xs[static_cast<size_t>(l)].push_back(x);
        ys[static_cast<size_t>(l)].push_back(y);
      }
    }
  }

  Matrix cell_inputs(cells, kCellInputs);
  for (int r = 0; r < gh; ++r) {
    for (int col = 0; col < gw; ++col) {
      const int cell = r * gw + col;
      cell_inputs.block(cell, 0, 1, kColors + 1) = fractions.row(cell);
      double pos[8];
      positional_features((col + 0.5) / gw, (r + 0.5) / gh, pos);
      for (int k = 0; k < 8; ++k) cell_inputs(cell, kColors + 1 + k) = pos[k];
      cell_inputs(cell, kCellInputs - 1) = 1.0;
    }
  }

  FoundationOutput out;
  out.grid_height = gh;
  out.grid_width = gw;
  out.class_names = toy::class_names();
  out.human_class = toy::kHumanClass;

  out.pixel_embedding.resize(cells, c);
  out.pixel_embedding.leftCols(kColors) = fractions.leftCols(kColors);
  out.pixel_embedding.col(kBiasChannel).setOnes();
  out.pixel_embedding.rightCols(c - kColors - 1) = (cell_inputs * pixel_proj_).array().tanh().matrix();

  FeatureLevel l0{gh, gw, (cell_inputs * level0_proj_).array().tanh().matrix()};
  const int h1 = (gh + 1) / 2;
  const int w1 = (gw + 1) / 2;
  Matrix pooled = Matrix::Zero(h1 * w1, kCellInputs);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(h1 * w1);
  for (int r = 0; r < gh; ++r) {
    for (int col = 0; col < gw; ++col) {
      const int dst = (r / 2) * w1 + col / 2;
      pooled.row(dst) += cell_inputs.row(r * gw + col);
      counts(dst) += 1.0;
    }
  }
  for (int i = 0; i < h1 * w1; ++i) pooled.row(i) /= counts(i);
  FeatureLevel l1{h1, w1, (pooled * level1_proj_).array().tanh().matrix()};
  out.levels = {std::move(l0), std::move(l1)};

  // One instance per palette color present with enough pixels.
  std::vector<Instance> instances;
  for (int col = 0; col < kColors; ++col) {
    const auto& px = xs[static_cast<size_t>(col)];
    const auto& py = ys[static_cast<size_t>(col)];
    if (static_cast<int>(px.size()) < config_.min_component_area) continue;
    const int x0 = *std::min_element(px.begin(), px.end());
    const int x1 = *std::max_element(px.begin(), px.end());
    const int y0 = *std::min_element(py.begin(), py.end());
    const int y1 = *std::max_element(py.begin(), py.end());
    const int bw = x1 - x0 + 1;
    const int bh = y1 - y0 + 1;
    Instance inst;
    inst.color = col;
    inst.area = static_cast<int>(px.size());
    inst.cls = classify_shape(px, py, x0, y0, bw, bh);
    inst.box = Box::from_corners(static_cast<double>(x0) / image.width, static_cast<double>(y0) / image.height,
                                 static_cast<double>(x1 + 1) / image.width,
                                 static_cast<double>(y1 + 1) / image.height);
    inst.fill = static_cast<double>(inst.area) / (static_cast<double>(bw) * bh);
    inst.aspect = static_cast<double>(bw) / (bw + bh);
    instances.push_back(inst);
  }

  const int background = kNumInstClasses - 1;
  const int image_area = image.width * image.height;
  std::vector<Eigen::RowVectorXd> fixed;
  std::vector<Eigen::RowVectorXd> logits;
  std::vector<Box> boxes;
  for (const Instance& inst : instances) {
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(kFixedQueryChannels);
    q(inst.color) = 1.0;
    q(kBiasChannel) = 1.0;
    q(kClassOffset + inst.cls) = 1.0;
    q(kBoxOffset + 0) = inst.box.cx;
    q(kBoxOffset + 1) = inst.box.cy;
    q(kBoxOffset + 2) = inst.box.w;
    q(kBoxOffset + 3) = inst.box.h;
    q(kShapeOffset + 0) = inst.fill;
    q(kShapeOffset + 1) = static_cast<double>(inst.area) / image_area;
    q(kShapeOffset + 2) = inst.aspect;
    Eigen::RowVectorXd lg = Eigen::RowVectorXd::Constant(kNumInstClasses, -5.0);
    lg(inst.cls) = 3.0 + 2.0 * std::min(1.0, inst.area / 64.0);
    fixed.push_back(q);
    logits.push_back(lg);
    boxes.push_back(inst.box);
  }
  // Background proposals on a 5x5 anchor grid fill the remaining slots.
  for (int a = 0; static_cast<int>(fixed.size()) < config_.top_k + static_cast<int>(instances.size()) && a < 25; ++a) {
    const Box anchor{(a % 5 + 0.5) / 5.0, (a / 5 + 0.5) / 5.0, 0.2, 0.2};
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(kFixedQueryChannels);
    q(kBiasChannel) = 1.0;
    q(kClassOffset + background) = 1.0;
    q(kBoxOffset + 0) = anchor.cx;
    q(kBoxOffset + 1) = anchor.cy;
    q(kBoxOffset + 2) = anchor.w;
    q(kBoxOffset + 3) = anchor.h;
    Eigen::RowVectorXd lg = Eigen::RowVectorXd::Constant(kNumInstClasses, -5.0);
    lg(background) = 5.0;
    fixed.push_back(q);
    logits.push_back(lg);
    boxes.push_back(anchor);
  }

  // Top-k by max foreground logit, ties to the lower original index.
  std::vector<int> order(fixed.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logits[static_cast<size_t>(a)].head(background).maxCoeff() >
           logits[static_cast<size_t>(b)].head(background).maxCoeff();
  });
  const int k = std::min<int>(config_.top_k, static_cast<int>(order.size()));
  out.queries.resize(k, c);
  out.class_logits.resize(k, kNumInstClasses);
  out.mask_logits.resize(k, cells);
  for (int i = 0; i < k; ++i) {
    const auto src = static_cast<size_t>(order[static_cast<size_t>(i)]);
    const Eigen::RowVectorXd& q = fixed[src];
    out.queries.block(i, 0, 1, kFixedQueryChannels) = q;
    out.queries.block(i, kFixedQueryChannels, 1, c - kFixedQueryChannels) =
        (q * query_proj_).array().tanh().matrix();
    out.class_logits.row(i) = logits[src];
    out.boxes.push_back(boxes[src]);
    out.mask_logits.row(i) =
        instance_mask_from_query(out.queries.row(i), mask_projection_, out.pixel_embedding);
  }
  return out;
}

namespace {

constexpr char kCacheMagic[8] = {'S', '2', 'H', 'F', 'O', 'U', 'N', 'D'};
constexpr std::uint32_t kCacheVersion = 1;

void write_matrix_f32(std::ostream& out, const Matrix& m) {
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index col = 0; col < m.cols(); ++col) io::write_pod<float>(out, static_cast<float>(m(r, col)));
  }
}

Matrix read_matrix_f32(std::istream& in) {
  const auto rows = io::read_pod<std::uint32_t>(in);
  const auto cols = io::read_pod<std::uint32_t>(in);
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw std::runtime_error("cache matrix too large");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = io::read_pod<float>(in);
  }
  return m;
}

}  // namespace

void write_foundation_cache(const std::string& path, const FoundationOutput& f) {
  f.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  io::write_bytes(out, kCacheMagic, sizeof(kCacheMagic));
  io::write_pod(out, kCacheVersion);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid_height));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid_width));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(f.human_class));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(f.class_names.size()));
  for (const auto& n : f.class_names) io::write_string(out, n);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(f.levels.size()));
  for (const auto& l : f.levels) {
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(l.height));
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(l.width));
    write_matrix_f32(out, l.features);
  }
  write_matrix_f32(out, f.queries);
  Matrix boxes(static_cast<Eigen::Index>(f.boxes.size()), 4);
  for (size_t i = 0; i < f.boxes.size(); ++i) {
    boxes.row(static_cast<Eigen::Index>(i)) << f.boxes[i].cx, f.boxes[i].cy, f.boxes[i].w, f.boxes[i].h;
  }
  write_matrix_f32(out, boxes);
  write_matrix_f32(out, f.class_logits);
  write_matrix_f32(out, f.mask_logits);
  write_matrix_f32(out, f.pixel_embedding);
  for (int q = 0; q < f.num_queries(); ++q) {
    const Rle rle = encode_rle(f.instance_mask(q));
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rle.counts.size()));
    for (auto run : rle.counts) io::write_pod(out, run);
  }
}

FoundationOutput read_foundation_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  io::read_bytes(in, magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kCacheMagic)) throw std::runtime_error(path + ": not a foundation cache");
  if (io::read_pod<std::uint32_t>(in) != kCacheVersion) throw std::runtime_error(path + ": unsupported cache version");
  FoundationOutput f;
  f.grid_height = static_cast<int>(io::read_pod<std::uint32_t>(in));
  f.grid_width = static_cast<int>(io::read_pod<std::uint32_t>(in));
  f.human_class = static_cast<int>(io::read_pod<std::uint32_t>(in));
  const auto n_names = io::read_pod<std::uint32_t>(in);
  if (n_names > 4096) throw std::runtime_error(path + ": too many class names");
  for (std::uint32_t i = 0; i < n_names; ++i) f.class_names.push_back(io::read_string(in));
  const auto n_levels = io::read_pod<std::uint32_t>(in);
  if (n_levels > 16) throw std::runtime_error(path + ": too many feature levels");
  for (std::uint32_t i = 0; i < n_levels; ++i) {
    FeatureLevel l;
    l.height = static_cast<int>(io::read_pod<std::uint32_t>(in));
    l.width = static_cast<int>(io::read_pod<std::uint32_t>(in));
    l.features = read_matrix_f32(in);
    f.levels.push_back(std::move(l));
  }
  f.queries = read_matrix_f32(in);
  const Matrix boxes = read_matrix_f32(in);
  for (Eigen::Index i = 0; i < boxes.rows(); ++i) {
    f.boxes.push_back(Box{boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)});
  }
  f.class_logits = read_matrix_f32(in);
  f.mask_logits = read_matrix_f32(in);
  f.pixel_embedding = read_matrix_f32(in);
  for (int q = 0; q < f.num_queries(); ++q) {
    Rle rle{f.grid_height, f.grid_width, {}};
    const auto n = io::read_pod<std::uint32_t>(in);
    if (n > static_cast<std::uint32_t>(f.cells()) + 1) throw std::runtime_error(path + ": malformed mask");
    for (std::uint32_t i = 0; i < n; ++i) rle.counts.push_back(io::read_pod<std::uint32_t>(in));
    if (decode_rle(rle) != f.instance_mask(q)) throw std::runtime_error(path + ": mask record mismatch");
  }
  f.validate();
  return f;
}

}  // namespace seg2hoi
