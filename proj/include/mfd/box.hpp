#pragma once

#include <algorithm>
#include <optional>
#include <tuple>

#include "mfd/mask_class.hpp"

namespace mfd {

// Face rectangle in pixel coordinates, optionally labeled by the classifier.
struct DetectionBox {
  int x = 0, y = 0, w = 0, h = 0;
  std::optional<MaskClass> label;
  std::optional<double> confidence;

  int area() const { return w * h; }
  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

// Canonical order: (y, x, w, h).
inline bool box_less(const DetectionBox& a, const DetectionBox& b) {
  return std::tie(a.y, a.x, a.w, a.h) < std::tie(b.y, b.x, b.w, b.h);
}

inline double iou(const DetectionBox& a, const DetectionBox& b) {
  const int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w), y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = x1 > x0 && y1 > y0 ? double(x1 - x0) * double(y1 - y0) : 0.0;
  const double uni = double(a.area()) + double(b.area()) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Intersection with the frame; nullopt when nothing is left.
inline std::optional<DetectionBox> clamp_box(DetectionBox b, int frame_w, int frame_h) {
  const int x0 = std::clamp(b.x, 0, frame_w), y0 = std::clamp(b.y, 0, frame_h);
  const int x1 = std::clamp(b.x + b.w, 0, frame_w), y1 = std::clamp(b.y + b.h, 0, frame_h);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  b.x = x0;
  b.y = y0;
  b.w = x1 - x0;
  b.h = y1 - y0;
  return b;
}

}  // namespace mfd
