#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seg2hoi {

/// Corner form (x_min, y_min, x_max, y_max) in the same units as the owning Box.
struct Corners {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
};

/// Axis-aligned box in canonical (cx, cy, w, h) form, normalized to [0, 1]
/// relative to the image width and height.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  static Box from_corners(const Corners& c);
  static Box from_corners(double x_min, double y_min, double x_max, double y_max) {
    return from_corners(Corners{x_min, y_min, x_max, y_max});
  }
  Corners corners() const;
  double area() const { return w * h; }
  bool valid() const;

  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);
/// Generalized IoU in (-1, 1]. Zero-area inputs give an IoU term of 0 and the
/// result is never NaN.
double giou(const Box& a, const Box& b);
double box_l1(const Box& a, const Box& b);

/// Grows the corner form by `gamma` on each side and clamps to [0, 1].
Box expand_box(const Box& b, double gamma);
/// Interval intersection; nullopt when the boxes are disjoint on either axis.
std::optional<Box> box_intersection(const Box& a, const Box& b);

/// Row-major bit grid at feature resolution.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  int cells() const { return height_ * width_; }

  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) { bits_[index(row, col)] = value ? 1 : 0; }
  bool cell(int flat) const { return bits_[static_cast<size_t>(flat)] != 0; }
  void set_cell(int flat, bool value = true) { bits_[static_cast<size_t>(flat)] = value ? 1 : 0; }

  int area() const;
  bool empty() const { return area() == 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// Cells whose logit is strictly above `threshold` (logit 0 = probability 0.5).
  static BinaryMask from_logits(std::span<const double> logits, int height, int width,
                                double threshold = 0.0);

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  size_t index(int row, int col) const { return static_cast<size_t>(row) * width_ + col; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b);
int intersection_area(const BinaryMask& a, const BinaryMask& b);
/// True when every 1-cell of `inner` is also set in `outer`.
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);

/// Tightest normalized box covering all 1-cells; nullopt for an empty mask.
std::optional<Box> mask_to_box(const BinaryMask& m);
/// Cells whose center lies inside `b` (inclusive edges).
BinaryMask rasterize_box(const Box& b, int height, int width);
/// Zeroes cells outside `b`; an absent box zeroes everything.
BinaryMask crop_mask(const BinaryMask& m, const std::optional<Box>& b);

/// COCO-style uncompressed run-length encoding: column-major runs that start
/// with a (possibly empty) run of zeros.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

Rle encode_rle(const BinaryMask& m);
BinaryMask decode_rle(const Rle& rle);

}  // namespace seg2hoi
