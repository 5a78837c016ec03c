// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Anchor grids, RPN and RoI label assignment, and mini-batch sampling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uavdet/box.hpp"
#include "uavdet/random.hpp"

namespace uavdet {

struct AnchorGridConfig {
  double stride = 8.0;
  std::vector<double> scales{64.0, 128.0, 256.0};  // box side lengths, pixels
  std::vector<double> ratios{0.5, 1.0, 2.0};       // height / width

  std::size_t per_location() const { return scales.size() * ratios.size(); }
};

// k·featH·featW anchors. Location-major (row-major over the feature map), then
// ratio-major, scale-minor within a location.
std::vector<Box> generate_anchors(const AnchorGridConfig& cfg, int feat_h, int feat_w);

enum class AnchorLabel : std::int8_t { kIgnore = -1, kNegative = 0, kPositive = 1 };

struct AnchorLabelSet {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;                 // valid where positive, else -1
  std::vector<std::optional<BoxDelta>> targets;  // present iff positive
  std::vector<double> max_iou;                 // over all GT, 0 when there are none

  std::size_t count(AnchorLabel label) const;
};

struct RpnLabelConfig {
  double positive_iou = 0.7;  // strictly above is positive
  double negative_iou = 0.3;  // strictly below is negative
  // Also mark, for each GT, its best-overlapping eligible anchor(s) positive.
  bool force_best_anchor_positive = false;
};

// With `training`, anchors that cross the image boundary are ignored before
// any threshold is applied.
AnchorLabelSet assign_rpn_labels(std::span<const Box> anchors, std::span<const Box> gt_boxes,
                                 double image_w, double image_h, bool training,
                                 const RpnLabelConfig& cfg = {});

struct Sample {
  std::vector<std::size_t> indices;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  bool short_of_negatives = false;
};

// Up to size/2 positives, the rest negatives. Ignored anchors are never drawn.
Sample sample_rpn_minibatch(const AnchorLabelSet& labels, std::size_t size, Rng& rng);

struct RoiLabel {
  int class_label = 0;              // 0 = background, 1..K
  std::optional<BoxDelta> target;   // foreground only
  int matched_gt = -1;
  double max_iou = 0.0;
};

struct RoiLabelConfig {
  double foreground_iou = 0.5;  // max IoU >= this is foreground
};

std::vector<RoiLabel> assign_roi_labels(std::span<const Box> proposals, std::span<const Box> gt_boxes,
                                        std::span<const int> class_ids, const RoiLabelConfig& cfg = {});

struct RoiSample {
  std::vector<std::size_t> indices;  // foreground first, then background
  std::size_t foreground = 0;
  std::size_t background = 0;
  bool padded_with_foreground = false;
};

// ceil(fg_fraction·R) foreground (or all available), remainder background.
// When background runs out, the batch is padded with further foreground.
RoiSample sample_roi_minibatch(std::span<const RoiLabel> rois, std::size_t batch_size,
                               double fg_fraction, Rng& rng);

}  // namespace uavdet
