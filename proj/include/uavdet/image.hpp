// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uavdet/tensor.hpp"

namespace uavdet {

// 8-bit RGB raster, row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  friend bool operator==(const Image&, const Image&) = default;
};

Image read_png(const std::filesystem::path& path);
// Writes to a temporary sibling and renames, so a failed write leaves nothing.
void write_png(const Image& image, const std::filesystem::path& path);

// Bilinear resampling with pixel-center alignment.
Image resize_bilinear(const Image& src, int width, int height);
Image mirror_horizontal(const Image& src);
Image crop(const Image& src, int x0, int y0, int width, int height);

// 3×H×W tensor with values mapped from [0, 255] to [−1, 1].
Tensor image_to_tensor(const Image& image);

}  // namespace uavdet
