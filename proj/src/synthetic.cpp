// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "uavdet/error.hpp"

namespace uavdet {

namespace {

using Rgb = std::array<double, 3>;

// Binary coverage over a rectangular window of the image.
class Mask {
 public:
  Mask(int width, int height) : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {}

  void set(int x, int y) {
    if (x >= 0 && y >= 0 && x < width_ && y < height_) bits_[static_cast<std::size_t>(y) * width_ + x] = 1;
  }
  bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  int width() const { return width_; }
  int height() const { return height_; }

  void disc(double cx, double cy, double rx, double ry) {
    for (int y = static_cast<int>(std::floor(cy - ry)); y <= static_cast<int>(std::ceil(cy + ry)); ++y) {
      for (int x = static_cast<int>(std::floor(cx - rx)); x <= static_cast<int>(std::ceil(cx + rx)); ++x) {
        const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
        if (u * u + v * v <= 1.0) set(x, y);
      }
    }
  }

  void ring(double cx, double cy, double r_out, double r_in) {
    for (int y = static_cast<int>(std::floor(cy - r_out)); y <= static_cast<int>(std::ceil(cy + r_out)); ++y) {
      for (int x = static_cast<int>(std::floor(cx - r_out)); x <= static_cast<int>(std::ceil(cx + r_out)); ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        if (d <= r_out && d >= r_in) set(x, y);
      }
    }
  }

  // Segment of half-thickness r.
  void line(double x0, double y0, double x1, double y1, double r) {
    const int xa = static_cast<int>(std::floor(std::min(x0, x1) - r)), xb = static_cast<int>(std::ceil(std::max(x0, x1) + r));
    const int ya = static_cast<int>(std::floor(std::min(y0, y1) - r)), yb = static_cast<int>(std::ceil(std::max(y0, y1) + r));
    const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) {
        const double px = x + 0.5 - x0, py = y + 0.5 - y0;
        const double t = len2 > 0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
        if (std::hypot(px - t * dx, py - t * dy) <= r) set(x, y);
      }
    }
  }

  void rect(double x0, double y0, double x1, double y1) {
    for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)); ++y) {
      for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)); ++x) set(x, y);
    }
  }

  // Tight bounding rectangle of the set pixels; invalid box when empty.
  Box bounds() const {
    int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        if (!get(x, y)) continue;
        x0 = std::min(x0, x); x1 = std::max(x1, x);
        y0 = std::min(y0, y); y1 = std::max(y1, y);
      }
    }
    if (x1 < 0) return Box{};
    return Box{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
  }

 private:
  int width_, height_;
  std::vector<std::uint8_t> bits_;
};

// Archetype colours are saturated or extreme; backgrounds and clutter are muted mid-tones.
constexpr std::array<Rgb, 4> kClassColour{{{205, 105, 45}, {235, 235, 245}, {35, 80, 225}, {20, 20, 30}}};

void draw_insulator(Mask& m, Rng& rng, double size, double x, double y) {
  const bool vertical = rng.bernoulli(0.5);
  const int discs = 5 + static_cast<int>(rng.uniform_index(4));
  const double pitch = size / discs;
  const double across = std::max(2.5, size * rng.uniform(0.14, 0.2));
  const double along = std::max(1.0, pitch * 0.42);
  for (int i = 0; i < discs; ++i) {
    const double c = (i + 0.5) * pitch;
    if (vertical) m.disc(x + across, y + c, across, along);
    else m.disc(x + c, y + across, along, across);
  }
  if (vertical) m.line(x + across, y + 0.5 * pitch, x + across, y + size - 0.5 * pitch, std::max(0.6, across * 0.15));
  else m.line(x + 0.5 * pitch, y + across, x + size - 0.5 * pitch, y + across, std::max(0.6, across * 0.15));
}

void draw_tower(Mask& m, Rng& rng, double size, double x, double y) {
  const double h = size, base = size * rng.uniform(0.45, 0.6), top = base * 0.25;
  const double r = std::max(0.7, size / 45.0);
  const double cx = x + 0.5 * base;
  const double lx0 = cx - 0.5 * base, lx1 = cx - 0.5 * top, rx0 = cx + 0.5 * base, rx1 = cx + 0.5 * top;
  const double yb = y + h - r, yt = y + r;
  m.line(lx0 + r, yb, lx1, yt, r);
  m.line(rx0 - r, yb, rx1, yt, r);
  const int levels = 3 + static_cast<int>(rng.uniform_index(2));
  double prev_l = lx1, prev_r = rx1, prev_y = yt;
  for (int i = 1; i <= levels; ++i) {
    const double t = static_cast<double>(i) / levels;
    const double ly = yt + t * (yb - yt);
    const double l = lx1 + t * (lx0 + r - lx1), rr = rx1 + t * (rx0 - r - rx1);
    m.line(l, ly, rr, ly, r * 0.8);
    m.line(prev_l, prev_y, rr, ly, r * 0.6);
    m.line(prev_r, prev_y, l, ly, r * 0.6);
    prev_l = l; prev_r = rr; prev_y = ly;
  }
  m.line(cx - 0.35 * size * 0.5, yt + 0.12 * h, cx + 0.35 * size * 0.5, yt + 0.12 * h, r);  // cross arm
}

void draw_fitting(Mask& m, Rng& rng, double size, double x, double y) {
  const double ro = 0.3 * size;
  const double cx = x + 0.5 * size, cy = y + 0.5 * size;
  m.ring(cx, cy, ro, ro * rng.uniform(0.35, 0.55));
  const double bar = std::max(1.0, size * 0.12);
  if (rng.bernoulli(0.5)) m.rect(x, cy - bar, x + size, cy + bar);
  else m.rect(cx - bar, y, cx + bar, y + size);
  m.disc(cx, cy, std::max(1.0, ro * 0.25), std::max(1.0, ro * 0.25));
}

// Sagging horizontal line; bounding box keeps an aspect of at least 8:1.
void draw_wire(Mask& m, Rng& rng, double length, double x, double y) {
  const double r = rng.uniform(0.6, 1.3);
  const double max_sag = std::max(0.0, length / 8.0 - 2.0 * r - 2.0);
  const double sag = rng.uniform(0.0, std::min(max_sag, length / 14.0));
  const int segments = 16;
  auto point_y = [&](double t) { return y + r + sag * 4.0 * t * (1.0 - t); };
  for (int i = 0; i < segments; ++i) {
    const double t0 = static_cast<double>(i) / segments, t1 = static_cast<double>(i + 1) / segments;
    m.line(x + r + t0 * (length - 2 * r), point_y(t0), x + r + t1 * (length - 2 * r), point_y(t1), r);
  }
}

// Footprint (w, h) reserved for an archetype of the given size.
std::pair<double, double> footprint(int class_id, double size) {
  switch (class_id) {
    case 1: return {size, size};
    case 2: return {0.62 * size, size};
    case 3: return {size, size};
    default: return {size, size / 8.0};
  }
}

double smooth_noise(const std::vector<double>& grid, int gw, double u, double v) {
  const int x0 = static_cast<int>(u), y0 = static_cast<int>(v);
  const double fx = u - x0, fy = v - y0;
  auto at = [&](int x, int y) { return grid[static_cast<std::size_t>(y) * gw + x]; };
  const double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
  const double top = at(x0, y0) + sx * (at(x0 + 1, y0) - at(x0, y0));
  const double bot = at(x0, y0 + 1) + sx * (at(x0 + 1, y0 + 1) - at(x0, y0 + 1));
  return top + sy * (bot - top);
}

Image render_background(const SyntheticConfig& cfg, Rng& rng) {
  static constexpr std::array<Rgb, 5> kPalette{{{120, 135, 110}, {140, 125, 100}, {128, 132, 138}, {105, 120, 95}, {150, 145, 130}}};
  const Rgb a = kPalette[rng.uniform_index(kPalette.size())];
  const Rgb b = kPalette[rng.uniform_index(kPalette.size())];
  Image img(cfg.width, cfg.height);
  std::vector<std::pair<double, std::vector<double>>> octaves;
  int cells = 6;
  std::vector<int> grid_w;
  for (int o = 0; o < 3; ++o, cells *= 3) {
    const int gw = cells + 2, gh = cells + 2;
    std::vector<double> g(static_cast<std::size_t>(gw) * gh);
    for (double& v : g) v = rng.uniform(-1.0, 1.0);
    octaves.emplace_back(18.0 / (1 << o), std::move(g));
    grid_w.push_back(gw);
  }
  const double span = std::max(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    const double t = static_cast<double>(y) / std::max(1, cfg.height - 1);
    for (int x = 0; x < cfg.width; ++x) {
      double n = 0.0;
      int c = 6;
      for (std::size_t o = 0; o < octaves.size(); ++o, c *= 3) {
        n += octaves[o].first * smooth_noise(octaves[o].second, grid_w[o], x / span * c, y / span * c);
      }
      for (int k = 0; k < 3; ++k) {
        const double v = a[static_cast<std::size_t>(k)] * (1 - t) + b[static_cast<std::size_t>(k)] * t + n;
        img.pixel(x, y)[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 60L, 190L));
      }
    }
  }
  // Distractor strokes and blobs in muted grey-browns.
  const auto strokes = static_cast<int>(std::lround(cfg.clutter * cfg.width * cfg.height / 1e5));
  for (int i = 0; i < strokes; ++i) {
    Mask m(cfg.width, cfg.height);
    const double x0 = rng.uniform(0, cfg.width), y0 = rng.uniform(0, cfg.height);
    if (rng.bernoulli(0.5)) {
      const double ang = rng.uniform(0, std::numbers::pi), len = rng.uniform(10, 60);
      m.line(x0, y0, x0 + len * std::cos(ang), y0 + len * std::sin(ang), rng.uniform(0.6, 2.0));
    } else {
      const double r = rng.uniform(3, 10);
      m.disc(x0, y0, r, r * rng.uniform(0.5, 1.0));
    }
    const double shade = rng.uniform(85, 165);
    const Rgb col{shade + rng.uniform(-8, 8), shade + rng.uniform(-8, 8), shade * 0.92};
    for (int y = std::max(0, static_cast<int>(y0) - 70); y < std::min(cfg.height, static_cast<int>(y0) + 71); ++y) {
      for (int x = std::max(0, static_cast<int>(x0) - 70); x < std::min(cfg.width, static_cast<int>(x0) + 71); ++x) {
        if (!m.get(x, y)) continue;
        for (int k = 0; k < 3; ++k) img.pixel(x, y)[k] = static_cast<std::uint8_t>(col[static_cast<std::size_t>(k)]);
      }
    }
  }
  return img;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (width < 32 || height < 32) throw ConfigError("synthetic images must be at least 32x32");
  for (int c : train_counts) {
    if (c < 1) throw ConfigError("every class needs at least one training image");
  }
  for (int c : test_counts) {
    if (c < 1) throw ConfigError("every class needs at least one test image");
  }
  if (max_objects < 1) throw ConfigError("max_objects must be >= 1");
  if (!(min_object >= 8.0 && max_object >= min_object)) throw ConfigError("bad object size range");
  if (max_object > std::min(width, height) - 8) throw ConfigError("objects larger than the image");
  if (small_fraction < 0.0 || small_fraction > 1.0) throw ConfigError("small_fraction must be in [0, 1]");
  if (!(small_min >= 6.0 && small_max >= small_min)) throw ConfigError("bad small-object band");
  if (!(contrast > 0.0 && contrast <= 1.0)) throw ConfigError("contrast must be in (0, 1]");
  if (clutter < 0.0) throw ConfigError("clutter must be non-negative");
}

std::array<int, 4> proportional_counts(const std::array<int, 4>& weights, int total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0) || total < 0) throw ConfigError("proportional_counts needs positive weights");
  std::array<int, 4> out{};
  std::array<double, 4> rem{};
  int assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double exact = weights[i] * total / sum;
    out[i] = static_cast<int>(std::floor(exact));
    rem[i] = exact - out[i];
    assigned += out[i];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % 4]];
  return out;
}

RenderedScene render_scene(const SyntheticConfig& cfg, int class_id, Rng& rng) {
  if (class_id < 1 || class_id > 4) throw ContractError("synthetic class id must be 1..4");
  RenderedScene scene;
  scene.background = render_background(cfg, rng);
  scene.image = scene.background;
  const int wanted = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cfg.max_objects)));
  const Rgb base = kClassColour[static_cast<std::size_t>(class_id - 1)];
  std::vector<Box> taken;
  for (int n = 0, attempts = 0; n < wanted && attempts < 60; ++attempts) {
    const bool small = rng.bernoulli(cfg.small_fraction);
    double size = small ? rng.uniform(cfg.small_min, cfg.small_max) : rng.uniform(cfg.min_object, cfg.max_object);
    if (class_id == 4) size *= 1.6;  // wires are long and thin
    if (class_id == 4) size = std::max(size, 32.0);
    const auto [fw, fh] = footprint(class_id, size);
    if (fw + 4 > cfg.width || fh + 4 > cfg.height) continue;
    const double x = rng.uniform(2.0, cfg.width - fw - 2.0);
    const double y = rng.uniform(2.0, cfg.height - fh - 2.0);
    Mask m(cfg.width, cfg.height);
    switch (class_id) {
      case 1: draw_insulator(m, rng, size, x, y); break;
      case 2: draw_tower(m, rng, size, x, y); break;
      case 3: draw_fitting(m, rng, size, x, y); break;
      default: draw_wire(m, rng, size, x, y); break;
    }
    const Box box = m.bounds();
    if (!box.valid()) continue;
    const Box padded{box.x1 - 4, box.y1 - 4, box.x2 + 4, box.y2 + 4};
    const bool overlaps = std::any_of(taken.begin(), taken.end(), [&](const Box& t) {
      return std::min(t.x2, padded.x2) > std::max(t.x1, padded.x1) && std::min(t.y2, padded.y2) > std::max(t.y1, padded.y1);
    });
    if (overlaps) continue;
    const double shade = rng.uniform(0.85, 1.1);
    for (int py = static_cast<int>(box.y1); py < static_cast<int>(box.y2); ++py) {
      for (int px = static_cast<int>(box.x1); px < static_cast<int>(box.x2); ++px) {
        if (!m.get(px, py)) continue;
        std::uint8_t* p = scene.image.pixel(px, py);
        const std::uint8_t* bg = scene.background.pixel(px, py);
        bool same = true;
        for (int k = 0; k < 3; ++k) {
          const double col = std::clamp(base[static_cast<std::size_t>(k)] * shade, 0.0, 255.0);
          const double v = bg[k] * (1.0 - cfg.contrast) + col * cfg.contrast;
          p[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          same = same && p[k] == bg[k];
        }
        // Every object pixel must remain distinguishable from the scene behind it.
        if (same) p[2] = static_cast<std::uint8_t>(bg[2] < 128 ? bg[2] + 1 : bg[2] - 1);
      }
    }
    taken.push_back(padded);
    scene.objects.push_back({class_id, box});
    ++n;
  }
  return scene;
}

Dataset generate_synthetic_dataset(const SyntheticConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  Dataset ds;
  ds.root = out_dir;
  ds.manifest.classes = default_class_table();
  std::filesystem::create_directories(out_dir);
  const std::array<std::pair<const char*, std::array<int, 4>>, 2> splits{{{"train", cfg.train_counts}, {"test", cfg.test_counts}}};
  for (std::uint64_t s = 0; s < splits.size(); ++s) {
    const std::string name = splits[s].first;
    const auto& counts = splits[s].second;
    std::vector<std::size_t> classes;
    for (std::size_t c = 0; c < 4; ++c) classes.insert(classes.end(), static_cast<std::size_t>(counts[c]), c + 1);
    Rng order = Rng::derive(cfg.seed, (s << 32) | 0xffffffffULL);
    order.shuffle(classes);
    std::filesystem::create_directories(out_dir / "images" / name);
    auto& records = ds.records[name];
    for (std::size_t i = 0; i < classes.size(); ++i) {
      Rng rng = Rng::derive(cfg.seed, (s << 32) | i);
      RenderedScene scene = render_scene(cfg, static_cast<int>(classes[i]), rng);
      char file[32];
      std::snprintf(file, sizeof file, "%06zu.png", i);
      const std::string ref = "images/" + name + "/" + file;
      write_png(scene.image, out_dir / ref);
      records.push_back(AnnotatedImage{ref, cfg.width, cfg.height, std::move(scene.objects), std::nullopt});
    }
    write_annotations(records, out_dir / (name + ".jsonl"));
    ds.manifest.splits[name] = {name + ".jsonl"};
  }
  write_manifest(ds.manifest, out_dir / "manifest.json");
  return ds;
}

}  // namespace uavdet
