// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace idg {

// Axis-aligned box, corner form, normalized to [0,1] canvas coordinates.
struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const {
    return x1 <= x2 && y1 <= y2 && x1 >= 0 && y1 >= 0 && x2 <= 1 && y2 <= 1;
  }
};

// Center form; the set-prediction head's native parameterization.
struct BoxCXCYWH {
  double cx = 0, cy = 0, w = 0, h = 0;
};

BoxXYXY to_xyxy(const BoxCXCYWH& b);
BoxCXCYWH to_cxcywh(const BoxXYXY& b);

double iou(const BoxXYXY& a, const BoxXYXY& b);

// IoU minus the enclosing-box deficit; range (-1, 1].
double giou(const BoxXYXY& a, const BoxXYXY& b);

// Area-fraction band filter: keep boxes covering between 1% and 20% of the
// canvas, inclusive at both ends.
bool passes_area_filter(const BoxXYXY& b);

// Greedily drops the box with the most IoU>0.1 conflicts (ties by lower
// index) until the retained set is pairwise compatible. Returns retained
// indices in ascending order.
std::vector<std::size_t> select_nonoverlapping(const std::vector<BoxXYXY>& boxes,
                                               double iou_threshold = 0.1);

}  // namespace idg
