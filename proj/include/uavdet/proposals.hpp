// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Proposal generation (decode, clip, NMS, top-N) and crop-and-resize RoI
// feature extraction.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uavdet/box.hpp"
#include "uavdet/tensor.hpp"

namespace uavdet {

// Greedy non-maximum suppression. Returns kept indices in descending score
// order; equal scores are ordered by lower index. A box is suppressed when
// its IoU with an already kept box exceeds `iou_threshold`.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold);

struct Proposal {
  Box box;
  double objectness = 0.0;
};

struct ProposalConfig {
  std::size_t pre_nms_top_n = 6000;
  std::size_t post_nms_top_n = 300;
  double nms_iou = 0.7;
};

struct ProposalResult {
  std::vector<Proposal> proposals;  // descending objectness
  std::size_t dropped_degenerate = 0;
  std::size_t dropped_cross_boundary = 0;
};

// No minimum-size filter is applied: small proposals are kept.
ProposalResult generate_proposals(std::span<const Box> anchors, std::span<const double> objectness,
                                  std::span<const BoxDelta> deltas, double image_w, double image_h,
                                  const ProposalConfig& cfg, bool training);

inline constexpr int kCropSize = 14;
inline constexpr int kRoiPoolSize = 7;

// RoI features for one box: C×7×7.
struct RoiFeature {
  Tensor values;
};

namespace ad {

// Bilinear crop of every RoI to a crop_size×crop_size grid: R×C×S×S.
// Boxes are in image pixels and are mapped to feature coordinates by
// dividing by feat_stride; grid points include the box corners and samples
// outside the map are clamped to the nearest edge.
Var crop_and_resize(Graph& g, Var feature_map, std::span<const Box> rois, double feat_stride,
                    int crop_size = kCropSize);

// crop_and_resize to 14×14 followed by 2×2/2 max pooling: R×C×7×7.
Var roi_features(Graph& g, Var feature_map, std::span<const Box> rois, double feat_stride);

}  // namespace ad

RoiFeature crop_and_resize(const Tensor& feature_map, const Box& roi, double feat_stride);

}  // namespace uavdet
