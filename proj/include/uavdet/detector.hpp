// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy shared backbone, RPN head and detection head.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "uavdet/anchors.hpp"
#include "uavdet/random.hpp"
#include "uavdet/tensor.hpp"

namespace uavdet {

// Stage i is a 3×3 conv (pad 1) + ReLU; every stage but the last is followed
// by a 2×2 max pool, so the feature stride is 2^(stages − 1).
struct BackboneConfig {
  std::vector<int> channels{16, 32, 64, 64};

  int feat_stride() const { return 1 << (channels.size() - 1); }
};

struct DetectorConfig {
  BackboneConfig backbone;
  AnchorGridConfig anchors;
  int rpn_hidden = 512;
  int fc_width = 256;
  int num_classes = 4;
  double head_init_std = 0.01;

  // Anchor stride always follows the backbone.
  AnchorGridConfig anchor_grid() const;
  void validate() const;
};

// Named parameter tensors. Names are prefixed by the sub-network that owns
// them: "backbone.", "rpn." or "det.".
using ModelParams = std::map<std::string, Tensor>;

enum class ParamGroup { kShared, kRpn, kDet };

ParamGroup group_of(const std::string& name);
ModelParams select_group(const ModelParams& params, ParamGroup group);

// Output layers (rpn.cls, rpn.bbox, det.cls, det.bbox) ~ N(0, head_init_std²);
// backbone kernels, rpn.conv, det.fc6 and det.fc7 ~ N(0, 1/fanIn); every bias
// is zero.
ModelParams init_params(Rng& rng, const DetectorConfig& cfg);

// Graph handles for a ModelParams set.
class BoundParams {
 public:
  BoundParams(Graph& g, const ModelParams& params, const std::function<bool(const std::string&)>& trainable);

  Var operator[](const std::string& name) const;
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  std::map<std::string, Var> vars_;
};

// image: 3×H×W. Bottom/right zero padding brings H, W up to multiples of the
// feature stride, so the output is C×ceil(H/stride)×ceil(W/stride).
Var backbone_forward(Graph& g, Var image, const BoundParams& params, const DetectorConfig& cfg);

struct RpnOutput {
  Var score_map;  // 2k×h×w logits; channel 2a+c is class c of anchor a
  Var delta_map;  // 4k×h×w
  Var probs;      // A×2 softmax, A = h·w·k in anchor order; column 1 = object
  Var deltas;     // A×4
  int feat_h = 0;
  int feat_w = 0;
};

RpnOutput rpn_head_forward(Graph& g, Var features, const BoundParams& params, int k);

struct DetOutput {
  Var probs;   // R×(K+1), column 0 = background
  Var deltas;  // R×4K
};

// roi_features: R×C×7×7.
DetOutput det_head_forward(Graph& g, Var roi_features, const BoundParams& params, int num_classes);

}  // namespace uavdet
