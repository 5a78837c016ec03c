// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/box.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uavdet/error.hpp"

namespace uavdet {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 > x1 && y2 > y1;
}

double BoxDelta::operator[](int i) const {
  switch (i) {
    case 0: return tx;
    case 1: return ty;
    case 2: return tw;
    case 3: return th;
    default: throw ContractError("BoxDelta index out of range");
  }
}

std::string to_string(const Box& b) {
  std::ostringstream os;
  os << '(' << b.x1 << ',' << b.y1 << ',' << b.x2 << ',' << b.y2 << ')';
  return os.str();
}

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) {
    throw ContractError("iou of invalid box " + to_string(a.valid() ? b : a));
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

BoxDelta encode(const Box& reference, const Box& target) {
  const double wa = reference.width(), ha = reference.height();
  return BoxDelta{(target.center_x() - reference.center_x()) / wa,
                  (target.center_y() - reference.center_y()) / ha,
                  std::log(target.width() / wa), std::log(target.height() / ha)};
}

DecodeResult decode(const Box& reference, const BoxDelta& delta) {
  const double wa = reference.width(), ha = reference.height();
  const double tw = std::clamp(delta.tw, -kMaxLogScale, kMaxLogScale);
  const double th = std::clamp(delta.th, -kMaxLogScale, kMaxLogScale);
  const double cx = reference.center_x() + delta.tx * wa;
  const double cy = reference.center_y() + delta.ty * ha;
  const double w = wa * std::exp(tw);
  const double h = ha * std::exp(th);
  return DecodeResult{Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h},
                      tw != delta.tw || th != delta.th};
}

ClipResult clip_to_image(const Box& b, double width, double height) {
  if (width <= 0.0 || height <= 0.0) throw ContractError("clip_to_image: empty image extent");
  Box c{std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
        std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
  return ClipResult{c, !(c.x2 > c.x1 && c.y2 > c.y1)};
}

Box flip_horizontal(const Box& b, double width) {
  return Box{width - b.x2, b.y1, width - b.x1, b.y2};
}

}  // namespace uavdet
