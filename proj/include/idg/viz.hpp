// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "idg/geometry.hpp"
#include "idg/image.hpp"

namespace idg {

// One-pixel rectangle outline; the box is in normalized [0,1] coordinates and
// is clipped to the raster.
void draw_box_outline(Image& img, const BoxXYXY& box,
                      const std::array<float, 3>& color);

// Side-by-side composition of a pair with a one-pixel separator column,
// ground truth in green and the prediction in red on both panels.
Image render_pair_overlay(const Image& img1, const Image& img2,
                          const BoxXYXY& gt, const BoxXYXY& pred);

}  // namespace idg
