#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seg2hoi/geometry.hpp"
#include "seg2hoi/image.hpp"

namespace seg2hoi::toy {

enum class ShapeKind { Disk, Rectangle, Triangle, Diamond };

constexpr int kPaletteSize = 8;
constexpr std::array<std::array<std::uint8_t, 3>, kPaletteSize> kPalette{{
    {220, 40, 40},    // red
    {40, 170, 60},    // green
    {40, 70, 220},    // blue
    {230, 200, 30},   // yellow
    {200, 50, 200},   // magenta
    {40, 200, 210},   // cyan
    {240, 130, 30},   // orange
    {120, 60, 170},   // purple
}};
constexpr std::array<std::uint8_t, 3> kBackground{205, 205, 205};

/// Instance classes of the toy world; the last entry is the background class.
const std::vector<std::string>& class_names();
int class_of(ShapeKind kind);
constexpr int kHumanClass = 0;

/// One filled shape. Geometry is in pixels; `half_w`/`half_h` are half extents
/// (a disk uses half_w as its radius). Triangles point up.
struct Shape {
  ShapeKind kind = ShapeKind::Disk;
  int color = 0;
  double cx = 0.0;
  double cy = 0.0;
  double half_w = 0.0;
  double half_h = 0.0;

  bool contains(double x, double y) const;
  /// Analytic bounding box, normalized by the canvas size.
  Box box(int width, int height) const;
};

/// Shapes are painted in order, so later shapes occlude earlier ones.
struct Scene {
  int width = 64;
  int height = 64;
  std::vector<Shape> shapes;
};

Image render(const Scene& scene);
/// Index of the visible shape at every pixel (row-major), -1 for background.
std::vector<int> label_map(const Scene& scene);

}  // namespace seg2hoi::toy
