// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/inference.hpp"

#include <algorithm>
#include <numeric>

#include "uavdet/box.hpp"
#include "uavdet/error.hpp"

namespace uavdet {

namespace {

struct RpnPass {
  Var features;
  std::vector<Box> anchors;
  std::vector<double> objectness;
  std::vector<BoxDelta> deltas;
};

RpnPass run_rpn(Graph& g, Var image, const BoundParams& bp, const DetectorConfig& cfg) {
  RpnPass pass;
  pass.features = backbone_forward(g, image, bp, cfg);
  const auto k = static_cast<int>(cfg.anchors.per_location());
  const RpnOutput out = rpn_head_forward(g, pass.features, bp, k);
  pass.anchors = generate_anchors(cfg.anchor_grid(), out.feat_h, out.feat_w);
  const Tensor& probs = g.value(out.probs);
  const Tensor& deltas = g.value(out.deltas);
  pass.objectness.resize(pass.anchors.size());
  pass.deltas.resize(pass.anchors.size());
  for (std::size_t a = 0; a < pass.anchors.size(); ++a) {
    pass.objectness[a] = probs[2 * a + 1];
    pass.deltas[a] = BoxDelta{deltas[4 * a], deltas[4 * a + 1], deltas[4 * a + 2], deltas[4 * a + 3]};
  }
  return pass;
}

}  // namespace

ProposalResult propose(const Image& image, const ModelParams& net, const DetectorConfig& cfg,
                       const ProposalConfig& pcfg, bool training) {
  Graph g;
  const BoundParams bp(g, net, nullptr);
  const Var img = g.constant(image_to_tensor(image));
  const RpnPass pass = run_rpn(g, img, bp, cfg);
  return generate_proposals(pass.anchors, pass.objectness, pass.deltas, image.width, image.height, pcfg, training);
}

std::vector<DetectionRecord> detect_scaled(const Image& image, const std::string& image_id,
                                           const ModelParams& rpn_net, const ModelParams& det_net,
                                           const DetectorConfig& cfg, const InferenceConfig& icfg) {
  Graph g;
  const Var img = g.constant(image_to_tensor(image));
  const BoundParams rpn_bp(g, rpn_net, nullptr);
  const RpnPass pass = run_rpn(g, img, rpn_bp, cfg);
  const ProposalResult props = generate_proposals(pass.anchors, pass.objectness, pass.deltas, image.width,
                                                  image.height, icfg.proposals, false);
  if (props.proposals.empty()) return {};

  Var features = pass.features;
  if (&rpn_net != &det_net) {
    const BoundParams det_bp(g, select_group(det_net, ParamGroup::kShared), nullptr);
    features = backbone_forward(g, img, det_bp, cfg);
  }
  std::vector<Box> rois;
  for (const auto& p : props.proposals) rois.push_back(p.box);
  const BoundParams head_bp(g, select_group(det_net, ParamGroup::kDet), nullptr);
  const Var feats = ad::roi_features(g, features, rois, cfg.backbone.feat_stride());
  const DetOutput out = det_head_forward(g, feats, head_bp, cfg.num_classes);
  const Tensor& probs = g.value(out.probs);
  const Tensor& deltas = g.value(out.deltas);
  const auto kc = static_cast<std::size_t>(cfg.num_classes);

  std::vector<DetectionRecord> dets;
  for (std::size_t c = 1; c <= kc; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t r = 0; r < rois.size(); ++r) {
      const double s = probs[r * (kc + 1) + c];
      if (s < icfg.score_threshold) continue;
      const std::size_t o = r * 4 * kc + 4 * (c - 1);
      const BoxDelta d{deltas[o], deltas[o + 1], deltas[o + 2], deltas[o + 3]};
      const ClipResult clipped = clip_to_image(decode(rois[r], d).box, image.width, image.height);
      if (clipped.degenerate) continue;
      boxes.push_back(clipped.box);
      scores.push_back(s);
    }
    std::vector<std::size_t> keep(boxes.size());
    std::iota(keep.begin(), keep.end(), 0);
    if (icfg.class_nms) keep = nms(boxes, scores, icfg.class_nms_iou);
    for (std::size_t i : keep) dets.push_back({image_id, static_cast<int>(c), boxes[i], scores[i]});
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const DetectionRecord& a, const DetectionRecord& b) { return a.score > b.score; });
  if (dets.size() > icfg.max_detections) dets.resize(icfg.max_detections);
  return dets;
}

std::vector<DetectionRecord> detect(const Image& original, const std::string& image_id, int short_side,
                                    int max_side, const ModelParams& rpn_net, const ModelParams& det_net,
                                    const DetectorConfig& cfg, const InferenceConfig& icfg) {
  const double s = resize_scale(original.width, original.height, short_side, max_side);
  const int w = std::max(1, static_cast<int>(std::lround(original.width * s)));
  const int h = std::max(1, static_cast<int>(std::lround(original.height * s)));
  const Image scaled = resize_bilinear(original, w, h);
  auto dets = detect_scaled(scaled, image_id, rpn_net, det_net, cfg, icfg);
  const double sx = static_cast<double>(original.width) / w, sy = static_cast<double>(original.height) / h;
  for (auto& d : dets) {
    d.box = clip_to_image(Box{d.box.x1 * sx, d.box.y1 * sy, d.box.x2 * sx, d.box.y2 * sy}, original.width,
                          original.height).box;
  }
  return dets;
}

SplitEvaluation evaluate_split(const Dataset& ds, const std::string& split, int short_side, int max_side,
                               const ModelParams& rpn_net, const ModelParams& det_net, const DetectorConfig& cfg,
                               const InferenceConfig& icfg, double match_iou) {
  SplitEvaluation out;
  const auto& records = ds.split(split);
  for (const auto& r : records) {
    auto dets = detect(ds.load_raster(r), r.image_ref, short_side, max_side, rpn_net, det_net, cfg, icfg);
    out.detections.insert(out.detections.end(), dets.begin(), dets.end());
  }
  out.result = mean_ap(out.detections, ground_truth_of(records), ds.manifest.num_classes(), match_iou);
  return out;
}

}  // namespace uavdet
