// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Detection overlays: box outlines with a "<class> <score>" caption.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uavdet/dataset.hpp"
#include "uavdet/evaluation.hpp"
#include "uavdet/image.hpp"

namespace uavdet {

using Rgb = std::array<std::uint8_t, 3>;

Rgb class_color(int class_id);

void draw_rect(Image& img, const Box& box, const Rgb& color, int thickness = 2);

// 5×7 glyphs scaled by `scale`; unknown characters render as blanks.
void draw_text(Image& img, int x, int y, const std::string& text, const Rgb& color, int scale = 1);
int text_width(const std::string& text, int scale = 1);

std::string caption(const std::string& class_name, double score);

// Copy of `img` with every detection at or above `min_score` drawn on it.
Image render_detections(const Image& img, const std::vector<DetectionRecord>& detections,
                        const std::vector<ClassEntry>& classes, double min_score = 0.5);

}  // namespace uavdet
