// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/detector.hpp"

#include <cmath>

#include "uavdet/error.hpp"

namespace uavdet {

namespace {

std::string conv_name(std::size_t stage) { return "backbone.conv" + std::to_string(stage + 1); }

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

double fan_in_std(std::int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

AnchorGridConfig DetectorConfig::anchor_grid() const {
  AnchorGridConfig grid = anchors;
  grid.stride = backbone.feat_stride();
  return grid;
}

void DetectorConfig::validate() const {
  if (backbone.channels.size() < 2 || backbone.channels.size() > 6) {
    throw ConfigError("backbone needs between 2 and 6 stages");
  }
  for (int c : backbone.channels) {
    if (c < 1) throw ConfigError("backbone channel widths must be positive");
  }
  if (anchors.scales.empty() || anchors.ratios.empty()) throw ConfigError("empty anchor scales/ratios");
  if (rpn_hidden < 1 || fc_width < 1) throw ConfigError("head widths must be positive");
  if (num_classes < 1) throw ConfigError("need at least one object class");
  if (!(head_init_std > 0.0)) throw ConfigError("head_init_std must be positive");
}

ParamGroup group_of(const std::string& name) {
  if (name.starts_with("backbone.")) return ParamGroup::kShared;
  if (name.starts_with("rpn.")) return ParamGroup::kRpn;
  if (name.starts_with("det.")) return ParamGroup::kDet;
  throw ContractError("parameter '" + name + "' belongs to no sub-network");
}

ModelParams select_group(const ModelParams& params, ParamGroup group) {
  ModelParams out;
  for (const auto& [name, t] : params) {
    if (group_of(name) == group) out.emplace(name, t);
  }
  return out;
}

ModelParams init_params(Rng& rng, const DetectorConfig& cfg) {
  cfg.validate();
  ModelParams p;
  const auto& ch = cfg.backbone.channels;
  std::int64_t in = 3;
  for (std::size_t s = 0; s < ch.size(); ++s) {
    const std::int64_t out = ch[s];
    p[conv_name(s) + ".weight"] = gaussian(rng, Shape{out, in, 3, 3}, fan_in_std(in * 9));
    p[conv_name(s) + ".bias"] = Tensor(Shape{out});
    in = out;
  }
  const std::int64_t feat = ch.back();
  const std::int64_t k = static_cast<std::int64_t>(cfg.anchors.per_location());
  const double sd = cfg.head_init_std;
  p["rpn.conv.weight"] = gaussian(rng, Shape{cfg.rpn_hidden, feat, 3, 3}, fan_in_std(feat * 9));
  p["rpn.conv.bias"] = Tensor(Shape{cfg.rpn_hidden});
  p["rpn.cls.weight"] = gaussian(rng, Shape{2 * k, cfg.rpn_hidden, 1, 1}, sd);
  p["rpn.cls.bias"] = Tensor(Shape{2 * k});
  p["rpn.bbox.weight"] = gaussian(rng, Shape{4 * k, cfg.rpn_hidden, 1, 1}, sd);
  p["rpn.bbox.bias"] = Tensor(Shape{4 * k});

  const std::int64_t flat = feat * 7 * 7;
  const std::int64_t fc = cfg.fc_width;
  const std::int64_t kc = cfg.num_classes;
  p["det.fc6.weight"] = gaussian(rng, Shape{flat, fc}, fan_in_std(flat));
  p["det.fc6.bias"] = Tensor(Shape{fc});
  p["det.fc7.weight"] = gaussian(rng, Shape{fc, fc}, fan_in_std(fc));
  p["det.fc7.bias"] = Tensor(Shape{fc});
  p["det.cls.weight"] = gaussian(rng, Shape{fc, kc + 1}, sd);
  p["det.cls.bias"] = Tensor(Shape{kc + 1});
  p["det.bbox.weight"] = gaussian(rng, Shape{fc, 4 * kc}, sd);
  p["det.bbox.bias"] = Tensor(Shape{4 * kc});
  return p;
}

BoundParams::BoundParams(Graph& g, const ModelParams& params,
                         const std::function<bool(const std::string&)>& trainable) {
  for (const auto& [name, t] : params) {
    vars_.emplace(name, trainable && trainable(name) ? g.parameter(t) : g.constant(t));
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

Var backbone_forward(Graph& g, Var image, const BoundParams& params, const DetectorConfig& cfg) {
  const Tensor& img = g.value(image);
  if (img.rank() != 3 || img.dim(0) != 3) throw DimensionError("backbone expects a 3×H×W image");
  const int stride = cfg.backbone.feat_stride();
  if (img.dim(1) < stride || img.dim(2) < stride) {
    throw ConfigError("image " + shape_string(img.shape()) + " is smaller than the feature stride");
  }
  Var x = ad::pad_to_multiple(g, image, stride);
  const std::size_t stages = cfg.backbone.channels.size();
  for (std::size_t s = 0; s < stages; ++s) {
    x = ad::conv2d(g, x, params[conv_name(s) + ".weight"], 1, 1);
    x = ad::add_channel_bias(g, x, params[conv_name(s) + ".bias"]);
    x = ad::relu(g, x);
    if (s + 1 < stages) x = ad::max_pool(g, x, 2, 2);
  }
  const Tensor& out = g.value(x);
  if (out.dim(1) != (img.dim(1) + stride - 1) / stride || out.dim(2) != (img.dim(2) + stride - 1) / stride) {
    throw DimensionError("backbone output violates the stride contract");
  }
  return x;
}

RpnOutput rpn_head_forward(Graph& g, Var features, const BoundParams& params, int k) {
  const Tensor& f = g.value(features);
  if (f.rank() != 3) throw DimensionError("RPN head expects C×h×w features");
  if (g.value(params["rpn.conv.weight"]).dim(1) != f.dim(0)) {
    throw DimensionError("RPN head channel count does not match the backbone");
  }
  if (g.value(params["rpn.cls.weight"]).dim(0) != 2 * k) {
    throw DimensionError("RPN head was built for a different anchor count");
  }
  RpnOutput out;
  out.feat_h = static_cast<int>(f.dim(1));
  out.feat_w = static_cast<int>(f.dim(2));
  Var h = ad::conv2d(g, features, params["rpn.conv.weight"], 1, 1);
  h = ad::relu(g, ad::add_channel_bias(g, h, params["rpn.conv.bias"]));
  out.score_map = ad::add_channel_bias(g, ad::conv2d(g, h, params["rpn.cls.weight"], 1, 0), params["rpn.cls.bias"]);
  out.delta_map = ad::add_channel_bias(g, ad::conv2d(g, h, params["rpn.bbox.weight"], 1, 0), params["rpn.bbox.bias"]);
  out.probs = ad::softmax_rows(g, ad::channels_to_rows(g, out.score_map, 2));
  out.deltas = ad::channels_to_rows(g, out.delta_map, 4);
  return out;
}

DetOutput det_head_forward(Graph& g, Var roi_features, const BoundParams& params, int num_classes) {
  const Tensor& r = g.value(roi_features);
  if (r.rank() != 4 || r.dim(2) != 7 || r.dim(3) != 7) throw DimensionError("detection head expects R×C×7×7");
  Var x = ad::reshape(g, roi_features, Shape{r.dim(0), r.dim(1) * 49});
  x = ad::relu(g, ad::linear(g, x, params["det.fc6.weight"], params["det.fc6.bias"]));
  x = ad::relu(g, ad::linear(g, x, params["det.fc7.weight"], params["det.fc7.bias"]));
  if (g.value(params["det.cls.weight"]).dim(1) != num_classes + 1) {
    throw DimensionError("detection head was built for a different class count");
  }
  DetOutput out;
  out.probs = ad::softmax_rows(g, ad::linear(g, x, params["det.cls.weight"], params["det.cls.bias"]));
  out.deltas = ad::linear(g, x, params["det.bbox.weight"], params["det.bbox.bias"]);
  return out;
}

}  // namespace uavdet
