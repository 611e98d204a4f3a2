// SPDX-License-Identifier: Apache-2.0
#include "idg/viz.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace idg {

namespace {

long to_px(double v, std::size_t extent) {
  return std::lround(v * double(extent - 1));
}

void set_px(Image& img, long x, long y, const std::array<float, 3>& c) {
  if (x < 0 || y < 0 || x >= long(img.width) || y >= long(img.height)) return;
  float* p = img.at(std::size_t(x), std::size_t(y));
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

}  // namespace

void draw_box_outline(Image& img, const BoxXYXY& box,
                      const std::array<float, 3>& color) {
  if (img.width == 0 || img.height == 0) return;
  long x1 = to_px(box.x1, img.width), x2 = to_px(box.x2, img.width);
  long y1 = to_px(box.y1, img.height), y2 = to_px(box.y2, img.height);
  if (x2 < x1) std::swap(x1, x2);
  if (y2 < y1) std::swap(y1, y2);
  for (long x = x1; x <= x2; ++x) {
    set_px(img, x, y1, color);
    set_px(img, x, y2, color);
  }
  for (long y = y1; y <= y2; ++y) {
    set_px(img, x1, y, color);
    set_px(img, x2, y, color);
  }
}

Image render_pair_overlay(const Image& img1, const Image& img2,
                          const BoxXYXY& gt, const BoxXYXY& pred) {
  if (img1.width != img2.width || img1.height != img2.height)
    throw std::invalid_argument("render_pair_overlay: size mismatch");
  const std::array<float, 3> green{0.0f, 1.0f, 0.0f};
  const std::array<float, 3> red{1.0f, 0.0f, 0.0f};
  Image a = img1, b = img2;
  for (Image* panel : {&a, &b}) {
    draw_box_outline(*panel, gt, green);
    draw_box_outline(*panel, pred, red);
  }
  Image out(img1.width * 2 + 1, img1.height);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < img1.width; ++x) {
      const float* pa = a.at(x, y);
      const float* pb = b.at(x, y);
      std::copy(pa, pa + 3, out.at(x, y));
      std::copy(pb, pb + 3, out.at(img1.width + 1 + x, y));
    }
    float* sep = out.at(img1.width, y);
    sep[0] = sep[1] = sep[2] = 1.0f;
  }
  return out;
}

}  // namespace idg
