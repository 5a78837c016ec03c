// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace uavdet {

// Axis-aligned rectangle in continuous pixel coordinates, corner format.
// Valid boxes have x2 > x1 and y2 > y1.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const;

  friend bool operator==(const Box&, const Box&) = default;
};

// Regression parameterization of a target box relative to a reference box:
// center offsets normalized by reference size, log-space size ratios.
struct BoxDelta {
  double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0;

  double operator[](int i) const;
  friend bool operator==(const BoxDelta&, const BoxDelta&) = default;
};

std::string to_string(const Box& b);

// |tw|, |th| above this are clamped in decode().
inline constexpr double kMaxLogScale = 20.0;

// Intersection over union. Throws ContractError on invalid boxes.
double iou(const Box& a, const Box& b);

BoxDelta encode(const Box& reference, const Box& target);

struct DecodeResult {
  Box box;
  bool clamped = false;  // a size term exceeded kMaxLogScale
};

DecodeResult decode(const Box& reference, const BoxDelta& delta);

struct ClipResult {
  Box box;
  bool degenerate = false;  // zero area after clipping
};

ClipResult clip_to_image(const Box& b, double width, double height);

// Mirror about the vertical center line of an image `width` pixels wide.
Box flip_horizontal(const Box& b, double width);

}  // namespace uavdet
