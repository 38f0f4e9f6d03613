#include "seg2hoi/toyworld.hpp"

#include <algorithm>
#include <cmath>

namespace seg2hoi::toy {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"human", "cup", "kite", "umbrella", "background"};
  return names;
}

int class_of(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Disk: return 0;
    case ShapeKind::Rectangle: return 1;
    case ShapeKind::Diamond: return 2;
    case ShapeKind::Triangle: return 3;
  }
  return 4;
}

bool Shape::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  switch (kind) {
    case ShapeKind::Disk:
      return dx * dx + dy * dy <= half_w * half_w;
    case ShapeKind::Rectangle:
      return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
    case ShapeKind::Diamond:
      return std::abs(dx) / half_w + std::abs(dy) / half_h <= 1.0;
    case ShapeKind::Triangle: {
      if (dy < -half_h || dy > half_h) return false;
      const double t = (dy + half_h) / (2.0 * half_h);
      return std::abs(dx) <= half_w * t;
    }
  }
  return false;
}

Box Shape::box(int width, int height) const {
  const double hh = kind == ShapeKind::Disk ? half_w : half_h;
  return Box::from_corners(std::clamp((cx - half_w) / width, 0.0, 1.0),
                           std::clamp((cy - hh) / height, 0.0, 1.0),
                           std::clamp((cx + half_w) / width, 0.0, 1.0),
                           std::clamp((cy + hh) / height, 0.0, 1.0));
}

std::vector<int> label_map(const Scene& scene) {
  std::vector<int> labels(static_cast<size_t>(scene.width) * scene.height, -1);
  for (size_t s = 0; s < scene.shapes.size(); ++s) {
    const Shape& shape = scene.shapes[s];
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (shape.contains(x + 0.5, y + 0.5)) {
          labels[static_cast<size_t>(y) * scene.width + x] = static_cast<int>(s);
        }
      }
    }
  }
  return labels;
}

Image render(const Scene& scene) {
  Image img(scene.width, scene.height);
  const auto labels = label_map(scene);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const int l = labels[static_cast<size_t>(y) * scene.width + x];
      const auto& c = l < 0 ? kBackground : kPalette[static_cast<size_t>(scene.shapes[static_cast<size_t>(l)].color)];
      std::copy(c.begin(), c.end(), img.pixel(x, y));
    }
  }
  return img;
}

}  // namespace seg2hoi::toy
