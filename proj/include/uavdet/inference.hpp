// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward-only detection: proposals, per-class scoring and decoding, and
// evaluation over a dataset split.

#pragma once

#include <string>
#include <vector>

#include "uavdet/dataset.hpp"
#include "uavdet/detector.hpp"
#include "uavdet/evaluation.hpp"
#include "uavdet/image.hpp"
#include "uavdet/proposals.hpp"

namespace uavdet {

struct InferenceConfig {
  ProposalConfig proposals{6000, 300, 0.7};
  double score_threshold = 0.05;
  bool class_nms = true;
  double class_nms_iou = 0.3;
  std::size_t max_detections = 100;
};

// Proposals for an image already at network scale.
ProposalResult propose(const Image& image, const ModelParams& net, const DetectorConfig& cfg,
                       const ProposalConfig& pcfg, bool training);

// `rpn_net` supplies proposals, `det_net` classifies them. When both are the
// same network the backbone runs once. Boxes are in the coordinates of
// `image`, which must already be at network scale.
std::vector<DetectionRecord> detect_scaled(const Image& image, const std::string& image_id,
                                           const ModelParams& rpn_net, const ModelParams& det_net,
                                           const DetectorConfig& cfg, const InferenceConfig& icfg);

// Resizes `original` to the test scale, detects, and maps boxes back.
std::vector<DetectionRecord> detect(const Image& original, const std::string& image_id, int short_side,
                                    int max_side, const ModelParams& rpn_net, const ModelParams& det_net,
                                    const DetectorConfig& cfg, const InferenceConfig& icfg);

struct SplitEvaluation {
  std::vector<DetectionRecord> detections;
  ApResult result;
};

SplitEvaluation evaluate_split(const Dataset& ds, const std::string& split, int short_side, int max_side,
                               const ModelParams& rpn_net, const ModelParams& det_net, const DetectorConfig& cfg,
                               const InferenceConfig& icfg, double match_iou = 0.5);

}  // namespace uavdet
