// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/losses.hpp"

#include <cmath>
#include <utility>

#include "uavdet/error.hpp"

namespace uavdet {

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (std::abs(x) < 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

double smooth_l1_sum(const BoxDelta& t, const BoxDelta& v) {
  return smooth_l1(t.tx - v.tx) + smooth_l1(t.ty - v.ty) + smooth_l1(t.tw - v.tw) +
         smooth_l1(t.th - v.th);
}

void LossConfig::validate() const {
  if (!(n_cls > 0.0) || !(n_reg > 0.0)) throw ConfigError("loss normalizers must be positive");
  if (lambda_rpn < 0.0 || lambda_det < 0.0) throw ConfigError("loss weights must be non-negative");
}

namespace ad {

Var log_loss(Graph& g, Var probs, std::span<const std::size_t> rows, std::span<const int> targets,
             double scale, std::size_t* clamped) {
  const Tensor& p = g.value(probs);
  if (p.rank() != 2) throw DimensionError("log_loss expects an N×M probability table");
  if (rows.size() != targets.size()) throw ContractError("log_loss: one target per row");
  const auto m = static_cast<std::size_t>(p.dim(1));
  std::vector<std::size_t> flat(rows.size());
  std::vector<char> live(rows.size());
  double total = 0.0;
  std::size_t n_clamped = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (targets[k] < 0 || static_cast<std::size_t>(targets[k]) >= m ||
        rows[k] >= static_cast<std::size_t>(p.dim(0))) {
      throw ContractError("log_loss: index out of range");
    }
    flat[k] = rows[k] * m + static_cast<std::size_t>(targets[k]);
    const double v = p[flat[k]];
    live[k] = v > kProbabilityFloor;
    if (!live[k]) ++n_clamped;
    total -= std::log(live[k] ? v : kProbabilityFloor);
  }
  if (clamped) *clamped = n_clamped;
  return g.record(Tensor::scalar(scale * total), {probs},
                  [=, flat = std::move(flat), live = std::move(live)](Graph& gr, const Tensor& dy) {
                    const Tensor& pv = gr.value(probs);
                    auto d = gr.grad_slot(probs).data();
                    for (std::size_t k = 0; k < flat.size(); ++k) {
                      if (live[k]) d[flat[k]] -= dy[0] * scale / pv[flat[k]];
                    }
                  });
}

Var smooth_l1_loss(Graph& g, Var pred, std::span<const RegressionTerm> terms, double scale) {
  const Tensor& p = g.value(pred);
  if (p.rank() != 2) throw DimensionError("smooth_l1_loss expects an N×M prediction table");
  const auto m = static_cast<std::size_t>(p.dim(1));
  std::vector<RegressionTerm> kept(terms.begin(), terms.end());
  double total = 0.0;
  for (const auto& t : kept) {
    if (t.row >= static_cast<std::size_t>(p.dim(0)) || t.col + 4 > m) {
      throw ContractError("smooth_l1_loss: index out of range");
    }
    const std::size_t base = t.row * m + t.col;
    for (int i = 0; i < 4; ++i) total += smooth_l1(p[base + static_cast<std::size_t>(i)] - t.target[i]);
  }
  return g.record(Tensor::scalar(scale * total), {pred},
                  [=, kept = std::move(kept)](Graph& gr, const Tensor& dy) {
                    const Tensor& pv = gr.value(pred);
                    auto d = gr.grad_slot(pred).data();
                    for (const auto& t : kept) {
                      const std::size_t base = t.row * m + t.col;
                      for (int i = 0; i < 4; ++i) {
                        const std::size_t j = base + static_cast<std::size_t>(i);
                        d[j] += dy[0] * scale * smooth_l1_grad(pv[j] - t.target[i]);
                      }
                    }
                  });
}

}  // namespace ad

namespace {

LossBreakdown combine(Graph& g, Var cls, Var reg, std::size_t clamped) {
  LossBreakdown out;
  out.cls = cls;
  out.reg = reg;
  out.total = ad::add(g, cls, reg);
  out.cls_value = g.value(cls).item();
  out.reg_value = g.value(reg).item();
  out.total_value = g.value(out.total).item();
  out.clamped_probabilities = clamped;
  return out;
}

}  // namespace

LossBreakdown rpn_loss(Graph& g, Var probs, Var deltas, const AnchorLabelSet& labels,
                       std::span<const std::size_t> sample, const LossConfig& cfg) {
  cfg.validate();
  if (sample.empty()) throw ContractError("rpn_loss: empty anchor sample");
  const Tensor& p = g.value(probs);
  const Tensor& d = g.value(deltas);
  if (p.rank() != 2 || p.dim(1) != 2 || d.rank() != 2 || d.dim(1) != 4 || p.dim(0) != d.dim(0) ||
      static_cast<std::size_t>(p.dim(0)) != labels.labels.size()) {
    throw DimensionError("rpn_loss: expected A×2 probabilities and A×4 deltas for every anchor");
  }
  std::vector<std::size_t> rows(sample.begin(), sample.end());
  std::vector<int> targets;
  std::vector<ad::RegressionTerm> reg_terms;
  targets.reserve(rows.size());
  for (std::size_t i : rows) {
    const AnchorLabel l = labels.labels.at(i);
    if (l == AnchorLabel::kIgnore) throw ContractError("rpn_loss: sampled anchor is labeled ignore");
    targets.push_back(l == AnchorLabel::kPositive ? 1 : 0);
    if (l == AnchorLabel::kPositive) reg_terms.push_back({i, 0, *labels.targets[i]});
  }
  std::size_t clamped = 0;
  Var cls = ad::log_loss(g, probs, rows, targets, 1.0 / cfg.n_cls, &clamped);
  Var reg = ad::smooth_l1_loss(g, deltas, reg_terms, cfg.lambda_rpn / cfg.n_reg);
  return combine(g, cls, reg, clamped);
}

LossBreakdown detection_loss(Graph& g, Var probs, Var deltas, std::span<const RoiLabel> rois,
                             const LossConfig& cfg) {
  cfg.validate();
  if (rois.empty()) throw ContractError("detection_loss: no RoIs");
  const Tensor& p = g.value(probs);
  const Tensor& d = g.value(deltas);
  if (p.rank() != 2 || d.rank() != 2 || p.dim(0) != d.dim(0) ||
      static_cast<std::size_t>(p.dim(0)) != rois.size() || d.dim(1) != 4 * (p.dim(1) - 1)) {
    throw DimensionError("detection_loss: expected R×(K+1) probabilities and R×4K deltas");
  }
  const int num_classes = static_cast<int>(p.dim(1)) - 1;
  std::vector<std::size_t> rows(rois.size());
  std::vector<int> targets(rois.size());
  std::vector<ad::RegressionTerm> reg_terms;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const RoiLabel& roi = rois[r];
    if (roi.class_label < 0 || roi.class_label > num_classes) {
      throw ContractError("detection_loss: class label out of range");
    }
    rows[r] = r;
    targets[r] = roi.class_label;
    if (roi.class_label >= 1) {
      if (!roi.target) throw ContractError("detection_loss: foreground RoI without target");
      reg_terms.push_back({r, static_cast<std::size_t>(4 * (roi.class_label - 1)), *roi.target});
    }
  }
  const double n = static_cast<double>(rois.size());
  const double reg_count = cfg.det_reg_norm == RegNormalization::kSampledCount
                               ? n
                               : std::max<double>(1.0, static_cast<double>(reg_terms.size()));
  std::size_t clamped = 0;
  Var cls = ad::log_loss(g, probs, rows, targets, 1.0 / n, &clamped);
  Var reg = ad::smooth_l1_loss(g, deltas, reg_terms, cfg.lambda_det / reg_count);
  return combine(g, cls, reg, clamped);
}

}  // namespace uavdet
