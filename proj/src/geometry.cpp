// SPDX-License-Identifier: Apache-2.0
#include "idg/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace idg {

BoxXYXY to_xyxy(const BoxCXCYWH& b) {
  BoxXYXY r;
  r.x1 = b.cx - b.w / 2.0;
  r.y1 = b.cy - b.h / 2.0;
  r.x2 = b.cx + b.w / 2.0;
  r.y2 = b.cy + b.h / 2.0;
  return r;
}

BoxCXCYWH to_cxcywh(const BoxXYXY& b) {
  BoxCXCYWH r;
  r.cx = (b.x1 + b.x2) / 2.0;
  r.cy = (b.y1 + b.y2) / 2.0;
  r.w = b.x2 - b.x1;
  r.h = b.y2 - b.y1;
  return r;
}

static double intersection_area(const BoxXYXY& a, const BoxXYXY& b) {
  double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;  // both degenerate
  return inter / uni;
}

double giou(const BoxXYXY& a, const BoxXYXY& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  BoxXYXY c;
  c.x1 = std::min(a.x1, b.x1);
  c.y1 = std::min(a.y1, b.y1);
  c.x2 = std::max(a.x2, b.x2);
  c.y2 = std::max(a.y2, b.y2);
  double enc = c.area();
  double i = uni <= 0.0 ? 0.0 : inter / uni;
  if (enc <= 0.0) return i;
  return i - (enc - uni) / enc;
}

bool passes_area_filter(const BoxXYXY& b) {
  double f = b.area();
  return f >= 0.01 && f <= 0.20;
}

std::vector<std::size_t> select_nonoverlapping(const std::vector<BoxXYXY>& boxes,
                                               double iou_threshold) {
  std::size_t n = boxes.size();
  std::vector<bool> alive(n, true);
  for (;;) {
    std::vector<std::size_t> conflicts(n, 0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        if (iou(boxes[i], boxes[j]) > iou_threshold) {
          ++conflicts[i];
          ++conflicts[j];
          any = true;
        }
      }
    }
    if (!any) break;
    std::size_t worst = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (conflicts[i] > conflicts[worst]) worst = i;
    alive[worst] = false;
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) kept.push_back(i);
  return kept;
}

}  // namespace idg
