// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <string>
#include <tuple>
#include <vector>

#include "patternid/errors.hpp"

namespace patternid {

/// Axis-aligned box with a class label. Coordinates are in pixels with the
/// origin at the top-left corner; x_min < x_max and y_min < y_max.
struct LabeledBox {
  std::string label;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool valid() const {
    return x_min < x_max && y_min < y_max && x_min >= 0 && y_min >= 0;
  }
  double area() const { return (x_max - x_min) * (y_max - y_min); }

  friend bool operator==(const LabeledBox& a, const LabeledBox& b) {
    return a.label == b.label && a.x_min == b.x_min && a.y_min == b.y_min &&
           a.x_max == b.x_max && a.y_max == b.y_max;
  }
};

/// Lexicographic coordinate order, used as a deterministic tie-break.
inline bool box_coords_less(const LabeledBox& a, const LabeledBox& b) {
  return std::tie(a.x_min, a.y_min, a.x_max, a.y_max) <
         std::tie(b.x_min, b.y_min, b.x_max, b.y_max);
}

inline double intersection_area(const LabeledBox& a, const LabeledBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const LabeledBox& a, const LabeledBox& b) {
  if (!a.valid() || !b.valid()) throw InvalidArgument("invalid box");
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Mirror boxes for a horizontally flipped image of the given width.
/// y extent and labels are unchanged.
inline std::vector<LabeledBox> hflip_boxes(const std::vector<LabeledBox>& boxes,
                                           double image_width) {
  std::vector<LabeledBox> out;
  out.reserve(boxes.size());
  for (const LabeledBox& b : boxes) {
    if (!b.valid()) throw InvalidArgument("invalid box");
    if (b.x_max > image_width)
      throw InvalidArgument("box exceeds image width");
    LabeledBox m = b;
    m.x_min = image_width - b.x_max;
    m.x_max = image_width - b.x_min;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace patternid
