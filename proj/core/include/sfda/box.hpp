// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

namespace sfda {

// Axis-aligned box in image units, corners (x1, y1) top-left and (x2, y2)
// bottom-right.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 < x2 && y1 < y2;
  }

  std::array<double, 4> coords() const { return {x1, y1, x2, y2}; }
  static BBox from_coords(const std::array<double, 4>& c) {
    return {c[0], c[1], c[2], c[3]};
  }

  bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);

// Generalized IoU: IoU - (area(enclosure) - area(union)) / area(enclosure).
double giou(const BBox& a, const BBox& b);

}  // namespace sfda
