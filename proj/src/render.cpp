// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace uavdet {

namespace {

// Row bitmaps, bit 4 is the leftmost column.
using Glyph = std::array<std::uint8_t, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs{
      {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}}, {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}}, {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
      {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}}, {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
      {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}}, {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}}, {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}}, {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
      {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}}, {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
      {'a', {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f}}, {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1e}},
      {'c', {0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e}}, {'d', {0x01, 0x01, 0x0d, 0x13, 0x11, 0x11, 0x0f}},
      {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}}, {'f', {0x06, 0x09, 0x08, 0x1c, 0x08, 0x08, 0x08}},
      {'g', {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x0e}}, {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'i', {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e}}, {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0c}},
      {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}}, {'l', {0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'m', {0x00, 0x00, 0x1a, 0x15, 0x15, 0x11, 0x11}}, {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'o', {0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e}}, {'p', {0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10}},
      {'q', {0x00, 0x00, 0x0d, 0x13, 0x0f, 0x01, 0x01}}, {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
      {'s', {0x00, 0x00, 0x0e, 0x10, 0x0e, 0x01, 0x1e}}, {'t', {0x08, 0x08, 0x1c, 0x08, 0x08, 0x09, 0x06}},
      {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d}}, {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04}},
      {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0a}}, {'x', {0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11}},
      {'y', {0x00, 0x00, 0x11, 0x11, 0x0f, 0x01, 0x0e}}, {'z', {0x00, 0x00, 0x1f, 0x02, 0x04, 0x08, 0x1f}},
  };
  return glyphs;
}

void put(Image& img, int x, int y, const Rgb& c) {
  if (!img.contains(x, y)) return;
  std::uint8_t* p = img.pixel(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

void fill(Image& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) put(img, x, y, c);
  }
}

}  // namespace

Rgb class_color(int class_id) {
  static const std::array<Rgb, 6> palette{{{230, 60, 60}, {60, 200, 80}, {70, 120, 240}, {240, 200, 40},
                                           {200, 80, 220}, {40, 210, 210}}};
  const auto n = static_cast<int>(palette.size());
  return palette[static_cast<std::size_t>(((class_id - 1) % n + n) % n)];
}

void draw_rect(Image& img, const Box& box, const Rgb& color, int thickness) {
  const int x1 = static_cast<int>(std::floor(box.x1)), y1 = static_cast<int>(std::floor(box.y1));
  const int x2 = static_cast<int>(std::ceil(box.x2)), y2 = static_cast<int>(std::ceil(box.y2));
  fill(img, x1, y1, x2, y1 + thickness, color);
  fill(img, x1, y2 - thickness, x2, y2, color);
  fill(img, x1, y1, x1 + thickness, y2, color);
  fill(img, x2 - thickness, y1, x2, y2, color);
}

int text_width(const std::string& text, int scale) { return static_cast<int>(text.size()) * 6 * scale; }

void draw_text(Image& img, int x, int y, const std::string& text, const Rgb& color, int scale) {
  int cx = x;
  for (char ch : text) {
    const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    auto it = font().find(lower);
    if (it != font().end()) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (!(it->second[static_cast<std::size_t>(row)] & (0x10 >> col))) continue;
          fill(img, cx + col * scale, y + row * scale, cx + (col + 1) * scale, y + (row + 1) * scale, color);
        }
      }
    }
    cx += 6 * scale;
  }
}

std::string caption(const std::string& class_name, double score) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), " %.3f", score);
  return class_name + buf;
}

Image render_detections(const Image& img, const std::vector<DetectionRecord>& detections,
                        const std::vector<ClassEntry>& classes, double min_score) {
  Image out = img;
  const int scale = std::max(1, std::min(img.width, img.height) / 400);
  std::vector<const DetectionRecord*> shown;
  for (const auto& d : detections) {
    if (d.score >= min_score) shown.push_back(&d);
  }
  // Ascending score order; the strongest caption ends up on top.
  std::stable_sort(shown.begin(), shown.end(), [](auto* a, auto* b) { return a->score < b->score; });
  for (const auto* d : shown) {
    std::string name = "class" + std::to_string(d->class_id);
    for (const auto& c : classes) {
      if (c.id == d->class_id) name = c.name;
    }
    const Rgb color = class_color(d->class_id);
    draw_rect(out, d->box, color, 2);
    const std::string text = caption(name, d->score);
    const int th = 9 * scale;
    const int tx = static_cast<int>(std::floor(d->box.x1));
    int ty = static_cast<int>(std::floor(d->box.y1)) - th;
    if (ty < 0) ty = static_cast<int>(std::floor(d->box.y1));
    fill(out, tx, ty, tx + text_width(text, scale) + scale, ty + th, color);
    draw_text(out, tx + scale, ty + scale, text, Rgb{0, 0, 0}, scale);
  }
  return out;
}

}  // namespace uavdet
