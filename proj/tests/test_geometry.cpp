// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "idg/geometry.hpp"
#include "idg/rng.hpp"

using namespace idg;

namespace {

// Rasterized counting oracle on an s x s grid: each cell center is classified
// against both boxes.
struct RasterCounts {
  double inter = 0, uni = 0, enclose = 0;
};

RasterCounts rasterize(const BoxXYXY& a, const BoxXYXY& b, std::size_t s) {
  auto inside = [](const BoxXYXY& x, double px, double py) {
    return px >= x.x1 && px <= x.x2 && py >= x.y1 && py <= x.y2;
  };
  BoxXYXY enc{std::min(a.x1, b.x1), std::min(a.y1, b.y1),
              std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
  RasterCounts c;
  for (std::size_t iy = 0; iy < s; ++iy)
    for (std::size_t ix = 0; ix < s; ++ix) {
      double px = (double(ix) + 0.5) / double(s);
      double py = (double(iy) + 0.5) / double(s);
      bool ia = inside(a, px, py), ib = inside(b, px, py);
      if (ia && ib) c.inter += 1;
      if (ia || ib) c.uni += 1;
      if (inside(enc, px, py)) c.enclose += 1;
    }
  double n = double(s) * double(s);
  c.inter /= n;
  c.uni /= n;
  c.enclose /= n;
  return c;
}

// Closed-form rasterization on a fine s x s grid: cell centers inside an
// interval are countable exactly, and intersection/enclosure of two boxes are
// boxes while the union follows by inclusion-exclusion.
double cells(double lo, double hi, std::size_t s) {
  double first = std::ceil(lo * double(s) - 0.5);
  double last = std::floor(hi * double(s) - 0.5);
  return std::max(0.0, last - first + 1.0);
}

RasterCounts rasterize_exact(const BoxXYXY& a, const BoxXYXY& b, std::size_t s) {
  auto box_cells = [&](const BoxXYXY& x) {
    return cells(x.x1, x.x2, s) * cells(x.y1, x.y2, s);
  };
  BoxXYXY inter{std::max(a.x1, b.x1), std::max(a.y1, b.y1),
                std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
  BoxXYXY enc{std::min(a.x1, b.x1), std::min(a.y1, b.y1),
              std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
  RasterCounts c;
  c.inter = (inter.x1 <= inter.x2 && inter.y1 <= inter.y2) ? box_cells(inter)
                                                           : 0.0;
  c.uni = box_cells(a) + box_cells(b) - c.inter;
  c.enclose = box_cells(enc);
  double n = double(s) * double(s);
  c.inter /= n;
  c.uni /= n;
  c.enclose /= n;
  return c;
}

BoxXYXY random_box(Rng& rng) {
  double x1 = rng.uniform(0.0, 0.9), y1 = rng.uniform(0.0, 0.9);
  double x2 = x1 + rng.uniform(0.02, 1.0 - x1 - 0.001);
  double y2 = y1 + rng.uniform(0.02, 1.0 - y1 - 0.001);
  return {x1, y1, x2, y2};
}

}  // namespace

TEST_CASE("iou worked values") {
  BoxXYXY a{0, 0, 0.2, 0.2}, b{0.1, 0.1, 0.3, 0.3};
  // [DERIVED: rasterized overlap counting on a 1000x1000 grid]
  RasterCounts rc = rasterize(a, b, 1000);
  CHECK(std::abs(rc.inter / rc.uni - 1.0 / 7.0) < 1e-3);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-9));

  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, BoxXYXY{0.5, 0.5, 0.7, 0.7}) == 0.0);
  // Degenerate boxes yield 0, no error.
  BoxXYXY pt{0.5, 0.5, 0.5, 0.5};
  CHECK(iou(pt, pt) == 0.0);
}

TEST_CASE("giou worked values") {
  BoxXYXY a{0, 0, 0.2, 0.2}, b{0.1, 0.1, 0.3, 0.3};
  // [DERIVED: closed form 1/7 - 2/9 cross-checked by rasterization]
  RasterCounts rc = rasterize(a, b, 1000);
  double oracle = rc.inter / rc.uni - (rc.enclose - rc.uni) / rc.enclose;
  CHECK(std::abs(oracle - (-5.0 / 63.0)) < 1e-3);
  CHECK(giou(a, b) == doctest::Approx(-5.0 / 63.0).epsilon(1e-9));

  CHECK(giou(a, a) == doctest::Approx(1.0));
  // Touching boxes: enclosure equals union.
  CHECK(giou(BoxXYXY{0, 0, 0.1, 0.1}, BoxXYXY{0.1, 0, 0.2, 0.1}) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("iou/giou against rasterization oracle on 1000 random pairs") {
  Rng rng(2024);
  for (int it = 0; it < 1000; ++it) {
    BoxXYXY a = random_box(rng), b = random_box(rng);
    // The closed-form count must agree with the explicit scan (spot-checked
    // on the slow grid), then serves as a fine-grid oracle.
    if (it < 5) {
      RasterCounts slow = rasterize(a, b, 300);
      RasterCounts fast = rasterize_exact(a, b, 300);
      CHECK(slow.inter == fast.inter);
      CHECK(slow.uni == fast.uni);
      CHECK(slow.enclose == fast.enclose);
    }
    RasterCounts rc = rasterize_exact(a, b, 1 << 14);
    double iou_o = rc.uni > 0 ? rc.inter / rc.uni : 0.0;
    double giou_o = iou_o - (rc.enclose - rc.uni) / rc.enclose;
    CHECK(std::abs(iou(a, b) - iou_o) < 1e-3);
    CHECK(std::abs(giou(a, b) - giou_o) < 1e-3);
    // Universal properties at full precision.
    CHECK(giou(a, b) <= iou(a, b) + 1e-12);
    CHECK(giou(a, b) == doctest::Approx(giou(b, a)).epsilon(1e-12));
    CHECK(giou(a, b) > -1.0);
    CHECK(giou(a, b) <= 1.0);
  }
}

TEST_CASE("scale invariance") {
  Rng rng(11);
  for (int it = 0; it < 100; ++it) {
    BoxXYXY a = random_box(rng), b = random_box(rng);
    double s = rng.uniform(0.1, 1.0);
    BoxXYXY as{a.x1 * s, a.y1 * s, a.x2 * s, a.y2 * s};
    BoxXYXY bs{b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s};
    CHECK(std::abs(iou(a, b) - iou(as, bs)) < 1e-10);
    CHECK(std::abs(giou(a, b) - giou(as, bs)) < 1e-10);
  }
}

TEST_CASE("box conversions") {
  BoxXYXY full = to_xyxy(BoxCXCYWH{0.5, 0.5, 1, 1});
  CHECK(full.x1 == doctest::Approx(0.0));
  CHECK(full.y2 == doctest::Approx(1.0));
  BoxXYXY q = to_xyxy(BoxCXCYWH{0.25, 0.25, 0.5, 0.5});
  CHECK(q.x1 == doctest::Approx(0.0));
  CHECK(q.x2 == doctest::Approx(0.5));

  Rng rng(13);
  for (int it = 0; it < 100; ++it) {
    BoxXYXY a = random_box(rng);
    BoxXYXY rt = to_xyxy(to_cxcywh(a));
    CHECK(std::abs(rt.x1 - a.x1) < 1e-12);
    CHECK(std::abs(rt.y1 - a.y1) < 1e-12);
    CHECK(std::abs(rt.x2 - a.x2) < 1e-12);
    CHECK(std::abs(rt.y2 - a.y2) < 1e-12);
  }
}

TEST_CASE("area filter inclusive band") {
  auto box_of_area = [](double frac) {
    double s = std::sqrt(frac);
    return BoxXYXY{0, 0, s, s};
  };
  CHECK_FALSE(passes_area_filter(box_of_area(0.005)));
  CHECK(passes_area_filter(box_of_area(0.05)));
  CHECK_FALSE(passes_area_filter(box_of_area(0.25)));
  CHECK(passes_area_filter(box_of_area(0.01)));
  CHECK(passes_area_filter(box_of_area(0.20)));
  CHECK_FALSE(passes_area_filter(BoxXYXY{0.5, 0.5, 0.5, 0.5}));
}

TEST_CASE("select_nonoverlapping") {
  std::vector<BoxXYXY> disjoint = {{0, 0, 0.1, 0.1},
                                   {0.2, 0.2, 0.3, 0.3},
                                   {0.5, 0.5, 0.6, 0.6}};
  CHECK(select_nonoverlapping(disjoint) ==
        std::vector<std::size_t>{0, 1, 2});

  std::vector<BoxXYXY> dup = {{0, 0, 0.2, 0.2}, {0, 0, 0.2, 0.2}};
  CHECK(select_nonoverlapping(dup).size() == 1);

  Rng rng(55);
  for (int it = 0; it < 50; ++it) {
    std::vector<BoxXYXY> boxes;
    for (int i = 0; i < 20; ++i) boxes.push_back(random_box(rng));
    auto keep = select_nonoverlapping(boxes);
    // [DERIVED: O(n^2) verification oracle]
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t j = i + 1; j < keep.size(); ++j)
        CHECK(iou(boxes[keep[i]], boxes[keep[j]]) <= 0.1);
  }
}
