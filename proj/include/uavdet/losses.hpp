// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// The RPN and detection-head multi-task losses and their building blocks.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uavdet/anchors.hpp"
#include "uavdet/box.hpp"
#include "uavdet/tensor.hpp"

namespace uavdet {

// 0.5·x² for |x| < 1, |x| − 0.5 otherwise.
double smooth_l1(double x);
double smooth_l1_grad(double x);

// Σ over (x, y, w, h) of smooth_l1(t_i − v_i).
double smooth_l1_sum(const BoxDelta& t, const BoxDelta& v);

inline constexpr double kProbabilityFloor = 1e-12;

enum class RegNormalization { kSampledCount, kForegroundCount };

struct LossConfig {
  double lambda_rpn = 10.0;
  double lambda_det = 1.0;
  double n_cls = 256.0;  // RPN classification normalizer: mini-batch size
  double n_reg = 1.0;    // RPN regression normalizer: number of anchor locations (trainers set h·w)
  RegNormalization det_reg_norm = RegNormalization::kSampledCount;

  void validate() const;
};

struct LossBreakdown {
  Var cls;
  Var reg;
  Var total;
  double cls_value = 0.0;
  double reg_value = 0.0;  // already weighted by λ
  double total_value = 0.0;
  std::size_t clamped_probabilities = 0;
};

namespace ad {

// scale · Σ_k −ln max(probs[rows[k], targets[k]], floor). Clamped entries
// pass no gradient.
Var log_loss(Graph& g, Var probs, std::span<const std::size_t> rows, std::span<const int> targets,
             double scale, std::size_t* clamped = nullptr);

struct RegressionTerm {
  std::size_t row;
  std::size_t col;  // first of four consecutive columns
  BoxDelta target;
};

// scale · Σ_terms smooth_l1_sum(pred[row, col..col+3], target).
Var smooth_l1_loss(Graph& g, Var pred, std::span<const RegressionTerm> terms, double scale);

}  // namespace ad

// probs: A×2 anchor probabilities (column 1 = object), deltas: A×4.
LossBreakdown rpn_loss(Graph& g, Var probs, Var deltas, const AnchorLabelSet& labels,
                       std::span<const std::size_t> sample, const LossConfig& cfg);

// probs: R×(K+1) class probabilities, deltas: R×4K class-specific deltas
// (class u occupies columns 4(u−1)..4(u−1)+3).
LossBreakdown detection_loss(Graph& g, Var probs, Var deltas, std::span<const RoiLabel> rois,
                             const LossConfig& cfg);

}  // namespace uavdet
