// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "uavdet/error.hpp"
#include "uavdet/losses.hpp"

using namespace uavdet;
using namespace uavdet::testing;

namespace {

AnchorLabelSet labels_of(const std::vector<AnchorLabel>& l, const std::vector<BoxDelta>& targets) {
  AnchorLabelSet s;
  s.labels = l;
  s.matched_gt.assign(l.size(), -1);
  s.targets.resize(l.size());
  s.max_iou.assign(l.size(), 0.0);
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] == AnchorLabel::kPositive) {
      s.matched_gt[i] = 0;
      s.targets[i] = targets[i];
    }
  }
  return s;
}

Tensor rows_of(std::int64_t cols, const std::vector<double>& v) {
  return Tensor(Shape{static_cast<std::int64_t>(v.size()) / cols, cols}, v);
}

RoiLabel fg(int cls, BoxDelta t) {
  RoiLabel r;
  r.class_label = cls;
  r.target = t;
  return r;
}

}  // namespace

TEST_CASE("smooth_l1 branch values") {
  CHECK(smooth_l1(0.0) == 0.0);
  CHECK(smooth_l1(1.0) == 0.5);
  CHECK(smooth_l1(-1.0) == 0.5);
  CHECK(smooth_l1(2.0) == 1.5);
  CHECK(smooth_l1(-2.0) == 1.5);
  CHECK(smooth_l1(0.5) == 0.125);
  // Value and slope are continuous at the branch point.
  CHECK(smooth_l1(1.0 - 1e-9) == doctest::Approx(smooth_l1(1.0 + 1e-9)).epsilon(1e-8));
  CHECK(smooth_l1_grad(1.0 - 1e-12) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(smooth_l1_grad(1.0 + 1e-12) == 1.0);
  CHECK(smooth_l1_grad(-3.0) == -1.0);
  CHECK(smooth_l1_grad(0.25) == 0.25);
}

TEST_CASE("smooth_l1_sum examples") {
  const BoxDelta t{0.3, -0.2, 0.1, 0.9};
  CHECK(smooth_l1_sum(t, t) == 0.0);
  CHECK(smooth_l1_sum({1, 0, 0, 0}, {}) == 0.5);
  CHECK(smooth_l1_sum({2, -2, 0.5, 0}, {}) == 3.125);
}

TEST_CASE("rpn loss closed forms") {
  LossConfig cfg;
  cfg.n_reg = 4.0;
  const std::vector<std::size_t> sample{0, 1};
  const auto labels = labels_of({AnchorLabel::kPositive, AnchorLabel::kNegative}, {{0.1, 0.2, 0.3, 0.4}, {}});

  Graph g;
  const Var perfect_p = g.constant(rows_of(2, {0, 1, 1, 0}));
  const Var perfect_d = g.constant(rows_of(4, {0.1, 0.2, 0.3, 0.4, 9, 9, 9, 9}));
  CHECK(rpn_loss(g, perfect_p, perfect_d, labels, sample, cfg).total_value == 0.0);

  const std::vector<std::size_t> one{0};
  const Var half = g.constant(rows_of(2, {0.5, 0.5, 1, 0}));
  const auto l = rpn_loss(g, half, perfect_d, labels, one, cfg);
  CHECK(l.total_value == doctest::Approx(std::log(2.0) / 256.0).epsilon(1e-12));
  CHECK(l.total_value == doctest::Approx(0.002708).epsilon(1e-3));
  CHECK_THROWS_AS(rpn_loss(g, half, perfect_d, labels, std::vector<std::size_t>{}, cfg), ContractError);
}

TEST_CASE("rpn loss scales regression with lambda only") {
  const auto labels = labels_of({AnchorLabel::kPositive, AnchorLabel::kNegative, AnchorLabel::kPositive},
                                {{0.5, -1.5, 0.2, 2.0}, {}, {0, 0, 0, 0}});
  const std::vector<std::size_t> sample{0, 1, 2};
  LossConfig a;
  a.n_reg = 3.0;
  LossConfig b = a;
  b.lambda_rpn = 2 * a.lambda_rpn;
  Graph g;
  const Var p = g.constant(rows_of(2, {0.3, 0.7, 0.6, 0.4, 0.2, 0.8}));
  const Var d = g.constant(rows_of(4, {0.1, 0.2, 0.3, 0.4, 1, 1, 1, 1, 0.5, 0.5, -0.5, 0}));
  const auto la = rpn_loss(g, p, d, labels, sample, a);
  const auto lb = rpn_loss(g, p, d, labels, sample, b);
  CHECK(lb.reg_value == doctest::Approx(2 * la.reg_value).epsilon(1e-12));
  CHECK(lb.cls_value == la.cls_value);
  const double reg = (smooth_l1_sum({0.1, 0.2, 0.3, 0.4}, {0.5, -1.5, 0.2, 2.0}) +
                      smooth_l1_sum({0.5, 0.5, -0.5, 0}, {})) *
                     a.lambda_rpn / 3.0;
  CHECK(la.reg_value == doctest::Approx(reg).epsilon(1e-12));
  const double cls = -(std::log(0.7) + std::log(0.6) + std::log(0.8)) / 256.0;
  CHECK(la.cls_value == doctest::Approx(cls).epsilon(1e-12));
}

TEST_CASE("rpn loss ignores anchors outside the sample") {
  const auto labels = labels_of({AnchorLabel::kPositive, AnchorLabel::kNegative, AnchorLabel::kPositive},
                                {{0.5, 0.5, 0.5, 0.5}, {}, {1, 1, 1, 1}});
  const std::vector<std::size_t> sample{0, 1};
  const LossConfig cfg;
  Graph g;
  const Var d = g.constant(rows_of(4, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
  const double base =
      rpn_loss(g, g.constant(rows_of(2, {0.3, 0.7, 0.6, 0.4, 0.5, 0.5})), d, labels, sample, cfg).total_value;
  const double moved = rpn_loss(g, g.constant(rows_of(2, {0.3, 0.7, 0.6, 0.4, 0.9, 0.1})),
                                g.constant(rows_of(4, {0, 0, 0, 0, 5, 5, 5, 5, 7, 7, 7, 7})), labels, sample, cfg)
                           .total_value;
  CHECK(base == moved);
  CHECK_THROWS_AS(rpn_loss(g, g.constant(rows_of(2, {0.5, 0.5})), g.constant(rows_of(4, {0, 0, 0, 0})),
                           labels_of({AnchorLabel::kIgnore}, {{}}), std::vector<std::size_t>{0}, cfg),
                  ContractError);
}

TEST_CASE("detection loss closed forms and gating") {
  const LossConfig cfg;
  Graph g;
  RoiLabel bg;
  const Var p = g.constant(rows_of(3, {0.25, 0.5, 0.25}));
  const Var d = g.constant(rows_of(8, {3, 3, 3, 3, 3, 3, 3, 3}));
  const auto l = detection_loss(g, p, d, std::vector<RoiLabel>{bg}, cfg);
  CHECK(l.cls_value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(l.reg_value == 0.0);

  const std::vector<RoiLabel> rois{fg(2, {0.1, 0.1, 0.1, 0.1}), bg};
  const Var perfect = g.constant(rows_of(3, {0, 0, 1, 1, 0, 0}));
  const Var dp = g.constant(rows_of(8, {5, 5, 5, 5, 0.1, 0.1, 0.1, 0.1, 0, 0, 0, 0, 0, 0, 0, 0}));
  CHECK(detection_loss(g, perfect, dp, rois, cfg).total_value == 0.0);

  // Only the deltas of the labeled class matter.
  const Var other = g.constant(rows_of(8, {-2, 4, 1, 9, 0.1, 0.1, 0.1, 0.1, 6, 6, 6, 6, 6, 6, 6, 6}));
  CHECK(detection_loss(g, perfect, other, rois, cfg).total_value == 0.0);
  const Var own = g.constant(rows_of(8, {5, 5, 5, 5, 1.1, 0.1, 0.1, 0.1, 0, 0, 0, 0, 0, 0, 0, 0}));
  CHECK(detection_loss(g, perfect, own, rois, cfg).reg_value == doctest::Approx(0.5 / 2.0).epsilon(1e-12));

  LossConfig doubled = cfg;
  doubled.lambda_det = 2.0;
  CHECK(detection_loss(g, perfect, own, rois, doubled).reg_value == doctest::Approx(0.5).epsilon(1e-12));
  LossConfig per_fg = cfg;
  per_fg.det_reg_norm = RegNormalization::kForegroundCount;
  CHECK(detection_loss(g, perfect, own, rois, per_fg).reg_value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zero true-class probability is clamped and flagged") {
  const LossConfig cfg;
  Graph g;
  const Var p = g.parameter(rows_of(3, {0, 1, 0}));
  const Var d = g.constant(rows_of(8, {0, 0, 0, 0, 0, 0, 0, 0}));
  const auto l = detection_loss(g, p, d, std::vector<RoiLabel>{RoiLabel{}}, cfg);
  CHECK(l.clamped_probabilities == 1);
  CHECK(l.cls_value == doctest::Approx(-std::log(kProbabilityFloor)));
  g.backward(l.total);
  CHECK(g.grad(p) == Tensor(Shape{1, 3}));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(31);
  const auto labels = labels_of({AnchorLabel::kPositive, AnchorLabel::kNegative, AnchorLabel::kPositive,
                                 AnchorLabel::kIgnore, AnchorLabel::kNegative},
                                {{0.3, -0.4, 0.5, -0.2}, {}, {-2.5, 1.7, 0.1, 0.05}, {}, {}});
  const std::vector<std::size_t> sample{0, 1, 2, 4};
  LossConfig cfg;
  cfg.n_reg = 5.0;
  const LossFn rpn = [&](Graph& g, const std::vector<Var>& v) {
    return rpn_loss(g, ad::softmax_rows(g, v[0]), v[1], labels, sample, cfg).total;
  };
  const std::vector<RoiLabel> rois{fg(1, {0.2, 0.2, -0.3, 0.1}), RoiLabel{}, fg(2, {-1.4, 0.6, 2.2, 0.0})};
  const LossFn det = [&](Graph& g, const std::vector<Var>& v) {
    return detection_loss(g, ad::softmax_rows(g, v[0]), v[1], rois, cfg).total;
  };
  for (int t = 0; t < 20; ++t) {
    // Keep deltas away from the smooth-L1 kink at |x| = 1.
    CHECK(check_gradients(rpn, {random_tensor(rng, Shape{5, 2}, -2, 2), random_tensor(rng, Shape{5, 4}, -0.5, 0.5)},
                          rng)
              .ok(1e-4));
    CHECK(check_gradients(det, {random_tensor(rng, Shape{3, 3}, -2, 2), random_tensor(rng, Shape{3, 8}, -0.5, 0.5)},
                          rng)
              .ok(1e-4));
  }
}
