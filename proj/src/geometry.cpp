#include "seg2hoi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace seg2hoi {

Box Box::from_corners(const Corners& c) {
  return Box{(c.x_min + c.x_max) / 2.0, (c.y_min + c.y_max) / 2.0, c.x_max - c.x_min,
             c.y_max - c.y_min};
}

Corners Box::corners() const {
  return Corners{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

bool Box::valid() const {
  auto finite = std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h);
  return finite && cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 && w >= 0.0 && h >= 0.0;
}

namespace {

double overlap_area(const Corners& a, const Corners& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

void require_same_size(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("mask dimension mismatch");
  }
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double inter = overlap_area(a.corners(), b.corners());
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const Box& a, const Box& b) {
  const Corners ca = a.corners();
  const Corners cb = b.corners();
  const double inter = overlap_area(ca, cb);
  const double uni = a.area() + b.area() - inter;
  const double iou_term = uni > 0.0 ? inter / uni : 0.0;
  const double ew = std::max(ca.x_max, cb.x_max) - std::min(ca.x_min, cb.x_min);
  const double eh = std::max(ca.y_max, cb.y_max) - std::min(ca.y_min, cb.y_min);
  const double enclosure = ew * eh;
  if (enclosure <= 0.0) return iou_term;
  return iou_term - (enclosure - uni) / enclosure;
}

double box_l1(const Box& a, const Box& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
}

Box expand_box(const Box& b, double gamma) {
  const Corners c = b.corners();
  return Box::from_corners(std::clamp(c.x_min - gamma, 0.0, 1.0), std::clamp(c.y_min - gamma, 0.0, 1.0),
                           std::clamp(c.x_max + gamma, 0.0, 1.0), std::clamp(c.y_max + gamma, 0.0, 1.0));
}

std::optional<Box> box_intersection(const Box& a, const Box& b) {
  const Corners ca = a.corners();
  const Corners cb = b.corners();
  const Corners out{std::max(ca.x_min, cb.x_min), std::max(ca.y_min, cb.y_min),
                    std::min(ca.x_max, cb.x_max), std::min(ca.y_max, cb.y_max)};
  if (out.x_min > out.x_max || out.y_min > out.y_max) return std::nullopt;
  return Box::from_corners(out);
}

BinaryMask::BinaryMask(int height, int width) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
  bits_.assign(static_cast<size_t>(height) * width, 0);
}

int BinaryMask::area() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::from_logits(std::span<const double> logits, int height, int width,
                                   double threshold) {
  BinaryMask m(height, width);
  if (logits.size() != static_cast<size_t>(m.cells())) {
    throw std::invalid_argument("logit count does not match mask size");
  }
  for (int i = 0; i < m.cells(); ++i) m.bits_[static_cast<size_t>(i)] = logits[i] > threshold ? 1 : 0;
  return m;
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  BinaryMask out(a.height(), a.width());
  for (int i = 0; i < a.cells(); ++i) out.set_cell(i, a.cell(i) || b.cell(i));
  return out;
}

BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  BinaryMask out(a.height(), a.width());
  for (int i = 0; i < a.cells(); ++i) out.set_cell(i, a.cell(i) && b.cell(i));
  return out;
}

int intersection_area(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  int n = 0;
  for (int i = 0; i < a.cells(); ++i) n += (a.cell(i) && b.cell(i)) ? 1 : 0;
  return n;
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
  require_same_size(inner, outer);
  for (int i = 0; i < inner.cells(); ++i) {
    if (inner.cell(i) && !outer.cell(i)) return false;
  }
  return true;
}

std::optional<Box> mask_to_box(const BinaryMask& m) {
  int r0 = m.height(), r1 = -1, c0 = m.width(), c1 = -1;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      if (!m.at(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) return std::nullopt;
  const double w = m.width();
  const double h = m.height();
  return Box::from_corners(c0 / w, r0 / h, (c1 + 1) / w, (r1 + 1) / h);
}

BinaryMask rasterize_box(const Box& b, int height, int width) {
  BinaryMask out(height, width);
  const Corners c = b.corners();
  for (int r = 0; r < height; ++r) {
    const double y = (r + 0.5) / height;
    if (y < c.y_min || y > c.y_max) continue;
    for (int col = 0; col < width; ++col) {
      const double x = (col + 0.5) / width;
      if (x >= c.x_min && x <= c.x_max) out.set(r, col);
    }
  }
  return out;
}

BinaryMask crop_mask(const BinaryMask& m, const std::optional<Box>& b) {
  if (!b) return BinaryMask(m.height(), m.width());
  return mask_intersection(m, rasterize_box(*b, m.height(), m.width()));
}

Rle encode_rle(const BinaryMask& m) {
  Rle rle{m.height(), m.width(), {}};
  bool current = false;
  std::uint32_t run = 0;
  for (int c = 0; c < m.width(); ++c) {
    for (int r = 0; r < m.height(); ++r) {
      if (m.at(r, c) != current) {
        rle.counts.push_back(run);
        run = 0;
        current = !current;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask decode_rle(const Rle& rle) {
  BinaryMask m(rle.height, rle.width);
  const std::uint64_t total =
      std::accumulate(rle.counts.begin(), rle.counts.end(), std::uint64_t{0});
  if (total != static_cast<std::uint64_t>(m.cells())) {
    throw std::invalid_argument("RLE counts do not cover the mask");
  }
  int pos = 0;
  bool value = false;
  for (std::uint32_t run : rle.counts) {
    for (std::uint32_t i = 0; i < run; ++i, ++pos) {
      if (value) m.set(pos % rle.height, pos / rle.height);
    }
    value = !value;
  }
  return m;
}

}  // namespace seg2hoi
