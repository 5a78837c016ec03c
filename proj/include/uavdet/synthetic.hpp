// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural stand-in for the UAV defect corpus: textured clutter backgrounds
// with four visually distinct object archetypes and exact boxes.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "uavdet/dataset.hpp"
#include "uavdet/random.hpp"

namespace uavdet {

struct SyntheticConfig {
  int width = 800;
  int height = 600;
  // Images per class (insulator, pole-and-tower, fitting, wire).
  std::array<int, 4> train_counts{1200, 2000, 1800, 600};
  std::array<int, 4> test_counts{50, 50, 50, 50};
  int max_objects = 3;         // instances of the image's class, at least 1
  double min_object = 40.0;    // long side, pixels
  double max_object = 160.0;
  double small_fraction = 0.0;  // share of instances drawn from the small band
  double small_min = 12.0;
  double small_max = 28.0;
  double contrast = 0.85;  // 1 = pure archetype colour, lower blends into the background
  double clutter = 1.0;    // distractor strokes per 10^5 pixels
  std::uint64_t seed = 1;

  void validate() const;
};

// Splits `total` in proportion to `weights`, largest remainder first (ties to
// the lower index), so the parts sum to `total` exactly.
std::array<int, 4> proportional_counts(const std::array<int, 4>& weights, int total);

struct RenderedScene {
  Image image;
  Image background;  // the same scene without objects
  std::vector<ObjectAnnotation> objects;
};

// One image whose objects all belong to `class_id`. Boxes are the exact
// bounding rectangles of the rendered object pixels, and objects never overlap.
RenderedScene render_scene(const SyntheticConfig& cfg, int class_id, Rng& rng);

// Renders both splits into `out_dir` (manifest.json, train.jsonl, test.jsonl,
// images/<split>/NNNNNN.png). Deterministic per seed.
Dataset generate_synthetic_dataset(const SyntheticConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace uavdet
