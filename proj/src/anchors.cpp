// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "uavdet/error.hpp"

namespace uavdet {

std::vector<Box> generate_anchors(const AnchorGridConfig& cfg, int feat_h, int feat_w) {
  if (cfg.scales.empty() || cfg.ratios.empty()) throw ConfigError("anchor scales/ratios must be non-empty");
  if (feat_h < 1 || feat_w < 1) throw ConfigError("feature map extent must be positive");
  if (cfg.stride <= 0.0) throw ConfigError("anchor stride must be positive");
  for (double s : cfg.scales) {
    if (!(s > 0.0)) throw ConfigError("anchor scale must be positive");
  }
  for (double r : cfg.ratios) {
    if (!(r > 0.0)) throw ConfigError("anchor ratio must be positive");
  }

  // Base shapes: w·h = scale², h/w = ratio.
  std::vector<std::pair<double, double>> shapes;
  for (double ratio : cfg.ratios) {
    for (double scale : cfg.scales) {
      const double w = scale / std::sqrt(ratio);
      shapes.emplace_back(w, w * ratio);
    }
  }
  std::vector<Box> anchors;
  anchors.reserve(shapes.size() * static_cast<std::size_t>(feat_h) * static_cast<std::size_t>(feat_w));
  for (int i = 0; i < feat_h; ++i) {
    const double cy = (i + 0.5) * cfg.stride;
    for (int j = 0; j < feat_w; ++j) {
      const double cx = (j + 0.5) * cfg.stride;
      for (const auto& [w, h] : shapes) {
        anchors.push_back(Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
      }
    }
  }
  return anchors;
}

std::size_t AnchorLabelSet::count(AnchorLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

AnchorLabelSet assign_rpn_labels(std::span<const Box> anchors, std::span<const Box> gt_boxes,
                                 double image_w, double image_h, bool training,
                                 const RpnLabelConfig& cfg) {
  const std::size_t n = anchors.size();
  AnchorLabelSet out;
  out.labels.assign(n, AnchorLabel::kIgnore);
  out.matched_gt.assign(n, -1);
  out.targets.assign(n, std::nullopt);
  out.max_iou.assign(n, 0.0);

  std::vector<char> eligible(n, 1);
  if (training) {
    for (std::size_t i = 0; i < n; ++i) {
      const Box& a = anchors[i];
      eligible[i] = a.x1 >= 0.0 && a.y1 >= 0.0 && a.x2 <= image_w && a.y2 <= image_h;
    }
  }

  std::vector<int> argmax(n, -1);
  std::vector<double> gt_best(gt_boxes.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!eligible[i]) continue;
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(anchors[i], gt_boxes[g]);
      if (v > out.max_iou[i]) {
        out.max_iou[i] = v;
        argmax[i] = static_cast<int>(g);
      }
      gt_best[g] = std::max(gt_best[g], v);
    }
  }

  auto make_positive = [&](std::size_t i, int g) {
    out.labels[i] = AnchorLabel::kPositive;
    out.matched_gt[i] = g;
    out.targets[i] = encode(anchors[i], gt_boxes[static_cast<std::size_t>(g)]);
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (!eligible[i]) continue;
    if (out.max_iou[i] > cfg.positive_iou) {
      make_positive(i, argmax[i]);
    } else if (out.max_iou[i] < cfg.negative_iou) {
      out.labels[i] = AnchorLabel::kNegative;
    }
  }

  if (cfg.force_best_anchor_positive) {
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      if (gt_best[g] <= 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        if (!eligible[i] || out.labels[i] == AnchorLabel::kPositive) continue;
        if (iou(anchors[i], gt_boxes[g]) == gt_best[g]) make_positive(i, static_cast<int>(g));
      }
    }
  }
  return out;
}

Sample sample_rpn_minibatch(const AnchorLabelSet& labels, std::size_t size, Rng& rng) {
  if (size == 0 || size % 2 != 0) throw ContractError("RPN mini-batch size must be positive and even");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] == AnchorLabel::kPositive) pos.push_back(i);
    if (labels.labels[i] == AnchorLabel::kNegative) neg.push_back(i);
  }
  Sample s;
  auto chosen_pos = rng.choose(std::move(pos), size / 2);
  const std::size_t want_neg = size - chosen_pos.size();
  s.short_of_negatives = neg.size() < want_neg;
  auto chosen_neg = rng.choose(std::move(neg), want_neg);
  s.positives = chosen_pos.size();
  s.negatives = chosen_neg.size();
  s.indices = std::move(chosen_pos);
  s.indices.insert(s.indices.end(), chosen_neg.begin(), chosen_neg.end());
  return s;
}

std::vector<RoiLabel> assign_roi_labels(std::span<const Box> proposals, std::span<const Box> gt_boxes,
                                        std::span<const int> class_ids, const RoiLabelConfig& cfg) {
  if (class_ids.size() != gt_boxes.size()) throw ContractError("one class id per ground-truth box");
  std::vector<RoiLabel> out(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    RoiLabel& r = out[i];
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(proposals[i], gt_boxes[g]);
      if (v > r.max_iou) {
        r.max_iou = v;
        r.matched_gt = static_cast<int>(g);
      }
    }
    if (r.matched_gt >= 0 && r.max_iou >= cfg.foreground_iou) {
      const auto g = static_cast<std::size_t>(r.matched_gt);
      r.class_label = class_ids[g];
      r.target = encode(proposals[i], gt_boxes[g]);
    } else {
      r.class_label = 0;
    }
  }
  return out;
}

RoiSample sample_roi_minibatch(std::span<const RoiLabel> rois, std::size_t batch_size,
                               double fg_fraction, Rng& rng) {
  if (batch_size < 4) throw ContractError("RoI mini-batch size must be at least 4");
  if (!(fg_fraction > 0.0 && fg_fraction <= 1.0)) throw ConfigError("fg_fraction must be in (0, 1]");
  std::vector<std::size_t> fg, bg;
  for (std::size_t i = 0; i < rois.size(); ++i) (rois[i].class_label > 0 ? fg : bg).push_back(i);

  const auto fg_quota = static_cast<std::size_t>(std::ceil(fg_fraction * static_cast<double>(batch_size)));
  // Draw a full permutation-prefix of foreground so padding can extend it.
  auto fg_order = rng.choose(std::move(fg), batch_size);
  const std::size_t fg_take = std::min(fg_quota, fg_order.size());
  auto bg_chosen = rng.choose(std::move(bg), batch_size - fg_take);

  RoiSample s;
  std::size_t fg_total = fg_take;
  if (fg_take + bg_chosen.size() < batch_size && fg_order.size() > fg_take) {
    s.padded_with_foreground = true;
    fg_total = std::min(fg_order.size(), batch_size - bg_chosen.size());
  }
  s.indices.assign(fg_order.begin(), fg_order.begin() + static_cast<std::ptrdiff_t>(fg_total));
  s.indices.insert(s.indices.end(), bg_chosen.begin(), bg_chosen.end());
  s.foreground = fg_total;
  s.background = bg_chosen.size();
  return s;
}

}  // namespace uavdet
