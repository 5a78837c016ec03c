// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uavdet/error.hpp"

namespace uavdet {

namespace {

std::vector<std::size_t> score_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) throw ContractError("nms: one score per box");
  const auto order = score_order(scores);
  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t a = 0; a < order.size(); ++a) {
    const std::size_t i = order[a];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const std::size_t j = order[b];
      if (!suppressed[j] && iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = 1;
    }
  }
  return keep;
}

ProposalResult generate_proposals(std::span<const Box> anchors, std::span<const double> objectness,
                                  std::span<const BoxDelta> deltas, double image_w, double image_h,
                                  const ProposalConfig& cfg, bool training) {
  if (anchors.size() != objectness.size() || anchors.size() != deltas.size()) {
    throw ContractError("generate_proposals: anchors, scores and deltas must be parallel");
  }
  ProposalResult out;
  std::vector<Box> boxes;
  std::vector<double> scores;
  boxes.reserve(anchors.size());
  scores.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Box& a = anchors[i];
    if (training && (a.x1 < 0.0 || a.y1 < 0.0 || a.x2 > image_w || a.y2 > image_h)) {
      ++out.dropped_cross_boundary;
      continue;
    }
    const ClipResult c = clip_to_image(decode(a, deltas[i]).box, image_w, image_h);
    if (c.degenerate) {
      ++out.dropped_degenerate;
      continue;
    }
    boxes.push_back(c.box);
    scores.push_back(objectness[i]);
  }
  auto order = score_order(scores);
  if (order.size() > cfg.pre_nms_top_n) order.resize(cfg.pre_nms_top_n);
  std::vector<Box> top_boxes;
  std::vector<double> top_scores;
  for (std::size_t i : order) {
    top_boxes.push_back(boxes[i]);
    top_scores.push_back(scores[i]);
  }
  auto keep = nms(top_boxes, top_scores, cfg.nms_iou);
  if (keep.size() > cfg.post_nms_top_n) keep.resize(cfg.post_nms_top_n);
  for (std::size_t i : keep) out.proposals.push_back({top_boxes[i], top_scores[i]});
  return out;
}

namespace ad {

namespace {

struct Tap {
  std::int64_t lo, hi;
  double frac;  // weight of hi
};

// Sample positions along one axis, align-corners style, clamped to [0, n−1].
std::vector<Tap> axis_taps(double start, double end, int samples, std::int64_t n) {
  std::vector<Tap> taps(static_cast<std::size_t>(samples));
  const double step = samples > 1 ? (end - start) / (samples - 1) : 0.0;
  for (int s = 0; s < samples; ++s) {
    double p = samples > 1 ? start + s * step : 0.5 * (start + end);
    p = std::clamp(p, 0.0, static_cast<double>(n - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(p));
    const std::int64_t hi = std::min(lo + 1, n - 1);
    taps[static_cast<std::size_t>(s)] = Tap{lo, hi, p - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Var crop_and_resize(Graph& g, Var feature_map, std::span<const Box> rois, double feat_stride,
                    int crop_size) {
  const Tensor& f = g.value(feature_map);
  if (f.rank() != 3) throw DimensionError("crop_and_resize expects a C×H×W feature map");
  if (rois.empty()) throw ContractError("crop_and_resize: no RoIs");
  if (crop_size < 1 || !(feat_stride > 0.0)) throw ConfigError("crop_and_resize: bad crop size or stride");
  const std::int64_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  const std::int64_t r = static_cast<std::int64_t>(rois.size());
  const std::int64_t s = crop_size;

  std::vector<Tap> xs, ys;
  xs.reserve(static_cast<std::size_t>(r * s));
  ys.reserve(static_cast<std::size_t>(r * s));
  for (const Box& b : rois) {
    const double fx1 = b.x1 / feat_stride, fx2 = b.x2 / feat_stride;
    const double fy1 = b.y1 / feat_stride, fy2 = b.y2 / feat_stride;
    if (!(fx2 > fx1) || !(fy2 > fy1) || !std::isfinite(fx1 + fx2 + fy1 + fy2)) {
      throw ContractError("crop_and_resize: degenerate RoI " + to_string(b));
    }
    auto tx = axis_taps(fx1, fx2, crop_size, w);
    auto ty = axis_taps(fy1, fy2, crop_size, h);
    xs.insert(xs.end(), tx.begin(), tx.end());
    ys.insert(ys.end(), ty.begin(), ty.end());
  }

  Tensor out(Shape{r, c, s, s});
  double* o = out.data().data();
  const double* fm = f.data().data();
  for (std::int64_t k = 0; k < r; ++k) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double* plane = fm + ch * h * w;
      for (std::int64_t i = 0; i < s; ++i) {
        const Tap& ty = ys[static_cast<std::size_t>(k * s + i)];
        const double* top = plane + ty.lo * w;
        const double* bot = plane + ty.hi * w;
        for (std::int64_t j = 0; j < s; ++j) {
          const Tap& tx = xs[static_cast<std::size_t>(k * s + j)];
          const double upper = top[tx.lo] + tx.frac * (top[tx.hi] - top[tx.lo]);
          const double lower = bot[tx.lo] + tx.frac * (bot[tx.hi] - bot[tx.lo]);
          *o++ = upper + ty.frac * (lower - upper);
        }
      }
    }
  }
  return g.record(std::move(out), {feature_map},
                  [=, xs = std::move(xs), ys = std::move(ys)](Graph& gr, const Tensor& dy) {
                    double* df = gr.grad_slot(feature_map).data().data();
                    const double* up = dy.data().data();
                    for (std::int64_t k = 0; k < r; ++k) {
                      for (std::int64_t ch = 0; ch < c; ++ch) {
                        double* plane = df + ch * h * w;
                        for (std::int64_t i = 0; i < s; ++i) {
                          const Tap& ty = ys[static_cast<std::size_t>(k * s + i)];
                          for (std::int64_t j = 0; j < s; ++j) {
                            const Tap& tx = xs[static_cast<std::size_t>(k * s + j)];
                            const double gv = *up++;
                            const double gt = gv * (1.0 - ty.frac), gb = gv * ty.frac;
                            plane[ty.lo * w + tx.lo] += gt * (1.0 - tx.frac);
                            plane[ty.lo * w + tx.hi] += gt * tx.frac;
                            plane[ty.hi * w + tx.lo] += gb * (1.0 - tx.frac);
                            plane[ty.hi * w + tx.hi] += gb * tx.frac;
                          }
                        }
                      }
                    }
                  });
}

Var roi_features(Graph& g, Var feature_map, std::span<const Box> rois, double feat_stride) {
  return max_pool(g, crop_and_resize(g, feature_map, rois, feat_stride, kCropSize), 2, 2);
}

}  // namespace ad

RoiFeature crop_and_resize(const Tensor& feature_map, const Box& roi, double feat_stride) {
  Graph g;
  const Var f = g.constant(feature_map);
  const Var out = ad::roi_features(g, f, std::span<const Box>(&roi, 1), feat_stride);
  const Tensor& v = g.value(out);
  return RoiFeature{v.reshaped(Shape{v.dim(1), v.dim(2), v.dim(3)})};
}

}  // namespace uavdet
