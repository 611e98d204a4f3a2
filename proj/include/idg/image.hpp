// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace idg {

// RGB raster, row-major, f32 channels in [0,1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> px;  // height * width * 3

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), px(w * h * 3, 0.0f) {}

  float* at(std::size_t x, std::size_t y) { return &px[(y * width + x) * 3]; }
  const float* at(std::size_t x, std::size_t y) const {
    return &px[(y * width + x) * 3];
  }

  bool operator==(const Image& o) const {
    return width == o.width && height == o.height && px == o.px;
  }
};

}  // namespace idg
