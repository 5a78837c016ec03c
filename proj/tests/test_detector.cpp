// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "end_to_end.hpp"
#include "support.hpp"
#include "uavdet/anchors.hpp"
#include "uavdet/detector.hpp"
#include "uavdet/error.hpp"
#include "uavdet/losses.hpp"
#include "uavdet/proposals.hpp"

using namespace uavdet;
using namespace uavdet::testing;

TEST_CASE("backbone output follows the stride contract") {
  Rng rng(51);
  DetectorConfig cfg = tiny_config();
  cfg.backbone.channels = {4, 4, 5};
  const ModelParams p = init_params(rng, cfg);
  for (int t = 0; t < 10; ++t) {
    const std::int64_t h = 4 + static_cast<std::int64_t>(rng.uniform_index(30));
    const std::int64_t w = 4 + static_cast<std::int64_t>(rng.uniform_index(30));
    Graph g;
    const BoundParams b(g, p, {});
    const Tensor img = random_tensor(rng, Shape{3, h, w});
    const Tensor f = g.value(backbone_forward(g, g.constant(img), b, cfg));
    CHECK(f.shape() == Shape{5, (h + 3) / 4, (w + 3) / 4});
    CHECK(g.value(backbone_forward(g, g.constant(img), b, cfg)) == f);
  }
  Graph g;
  const BoundParams b(g, p, {});
  CHECK_THROWS_AS(backbone_forward(g, g.constant(Tensor(Shape{3, 3, 9})), b, cfg), ConfigError);
  CHECK_THROWS_AS(backbone_forward(g, g.constant(Tensor(Shape{1, 9, 9})), b, cfg), DimensionError);

  for (const auto& [name, t] : p) {
    if (name.ends_with(".bias")) CHECK(t == Tensor(t.shape()));
  }
  const Tensor zf = g.value(backbone_forward(g, g.constant(Tensor(Shape{3, 12, 12})), b, cfg));
  for (double v : zf.data()) CHECK(v == 0.0);
}

TEST_CASE("rpn head shapes and simplex") {
  Rng rng(52);
  DetectorConfig cfg;
  cfg.backbone.channels = {4, 8};
  cfg.rpn_hidden = 16;
  cfg.fc_width = 8;
  const ModelParams p = init_params(rng, cfg);
  Graph g;
  const BoundParams b(g, p, {});
  const Var f = g.constant(random_tensor(rng, Shape{8, 5, 7}));
  const RpnOutput out = rpn_head_forward(g, f, b, 9);
  CHECK(g.value(out.score_map).shape() == Shape{18, 5, 7});
  CHECK(g.value(out.delta_map).shape() == Shape{36, 5, 7});
  const Tensor& probs = g.value(out.probs);
  CHECK(probs.shape() == Shape{5 * 7 * 9, 2});
  for (std::int64_t r = 0; r < probs.dim(0); ++r) {
    CHECK(probs[static_cast<std::size_t>(2 * r)] + probs[static_cast<std::size_t>(2 * r + 1)] ==
          doctest::Approx(1.0).epsilon(1e-14));
  }
  // Row of anchor a at location (y, x) pairs channels 2a and 2a+1.
  const Tensor& s = g.value(out.score_map);
  const std::size_t loc = 2 * 7 + 3, a = 4;
  const double s0 = s[(2 * a) * 35 + loc], s1 = s[(2 * a + 1) * 35 + loc];
  CHECK(probs[(loc * 9 + a) * 2 + 1] == doctest::Approx(1.0 / (1.0 + std::exp(s0 - s1))).epsilon(1e-12));
  const Tensor& d = g.value(out.deltas);
  const Tensor& dm = g.value(out.delta_map);
  CHECK(d[(loc * 9 + a) * 4 + 2] == dm[(4 * a + 2) * 35 + loc]);

  CHECK_THROWS_AS(rpn_head_forward(g, g.constant(Tensor(Shape{6, 5, 7})), b, 9), DimensionError);
  CHECK_THROWS_AS(rpn_head_forward(g, f, b, 3), DimensionError);
}

TEST_CASE("detection head shapes and uniform output on zero input") {
  Rng rng(53);
  DetectorConfig cfg;
  cfg.backbone.channels = {4, 8};
  cfg.rpn_hidden = 16;
  cfg.fc_width = 32;
  const ModelParams p = init_params(rng, cfg);
  Graph g;
  const BoundParams b(g, p, {});
  const DetOutput out = det_head_forward(g, g.constant(random_tensor(rng, Shape{3, 8, 7, 7})), b, 4);
  CHECK(g.value(out.probs).shape() == Shape{3, 5});
  CHECK(g.value(out.deltas).shape() == Shape{3, 16});
  for (int r = 0; r < 3; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) sum += g.value(out.probs)[static_cast<std::size_t>(r * 5 + c)];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  const DetOutput zero = det_head_forward(g, g.constant(Tensor(Shape{2, 8, 7, 7})), b, 4);
  for (double v : g.value(zero.probs).data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(det_head_forward(g, g.constant(Tensor(Shape{2, 8, 6, 6})), b, 4), DimensionError);
  CHECK_THROWS_AS(det_head_forward(g, g.constant(Tensor(Shape{2, 8, 7, 7})), b, 3), DimensionError);
}

TEST_CASE("parameter initialization") {
  DetectorConfig cfg;
  cfg.backbone.channels = {4, 8};
  cfg.rpn_hidden = 16;
  cfg.fc_width = 256;
  Rng a(54), b(54);
  const ModelParams p = init_params(a, cfg);
  CHECK(p == init_params(b, cfg));
  for (const auto& [name, t] : p) {
    if (name.ends_with(".bias")) {
      for (double v : t.data()) CHECK(v == 0.0);
    }
    CHECK_NOTHROW(group_of(name));
  }
  const auto sample_sd = [](const Tensor& t) {
    double mean = 0.0, sq = 0.0;
    for (double v : t.data()) mean += v;
    mean /= static_cast<double>(t.size());
    for (double v : t.data()) sq += (v - mean) * (v - mean);
    return std::pair{mean, std::sqrt(sq / static_cast<double>(t.size() - 1))};
  };
  // Hidden layers: 1/sqrt(fan-in). Output layers: head_init_std.
  const Tensor& fc6 = p.at("det.fc6.weight");
  REQUIRE(fc6.size() >= 100000);
  const double fc6_want = 1.0 / std::sqrt(static_cast<double>(8 * 7 * 7));
  const auto [fc6_mean, fc6_sd] = sample_sd(fc6);
  CHECK(std::abs(fc6_mean) < 3 * fc6_want / std::sqrt(static_cast<double>(fc6.size())));
  CHECK(std::abs(fc6_sd - fc6_want) < 0.05 * fc6_want);
  const Tensor& bbox = p.at("det.bbox.weight");
  REQUIRE(bbox.size() >= 4000);
  const auto [bbox_mean, bbox_sd] = sample_sd(bbox);
  CHECK(std::abs(bbox_mean) < 4 * cfg.head_init_std / std::sqrt(static_cast<double>(bbox.size())));
  CHECK(std::abs(bbox_sd - cfg.head_init_std) < 0.05 * cfg.head_init_std);

  CHECK(select_group(p, ParamGroup::kShared).size() == 4);
  CHECK(select_group(p, ParamGroup::kRpn).size() == 6);
  CHECK(select_group(p, ParamGroup::kDet).size() == 8);
  CHECK_THROWS_AS(group_of("head.weight"), ContractError);
}

TEST_CASE("end-to-end loss gradient reaches the backbone") {
  Rng rng(55);
  const EndToEnd net(rng);
  ModelParams params = init_params(rng, net.cfg);
  Graph g;
  const BoundParams bound(g, params, all_trainable);
  g.backward(net.loss(g, bound));
  const double h = 1e-6;
  for (const std::string name : {"backbone.conv1.weight", "backbone.conv2.weight", "rpn.conv.weight", "det.fc6.weight"}) {
    const Tensor grad = g.grad(bound[name]);
    Tensor& w = params[name];
    double worst = 0.0, scale = 0.0;
    for (std::size_t i : rng.choose(std::vector<std::size_t>{0, 1, 2, 5, 7, 11, 13, 17, 19, 23, 29, 31}, 8)) {
      const double keep = w[i];
      w[i] = keep + h;
      const double up = net.value(params);
      w[i] = keep - h;
      const double down = net.value(params);
      w[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]));
      scale = std::max({scale, std::abs(fd), std::abs(grad[i])});
    }
    CAPTURE(name);
    CHECK(scale > 0.0);
    CHECK(worst <= 1e-3 * scale);
  }
}
