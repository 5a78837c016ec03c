// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "uavdet/box.hpp"
#include "uavdet/error.hpp"

using namespace uavdet;

namespace {

Box random_box(Rng& rng, double lo = 1.0, double hi = 500.0) {
  const double w = rng.uniform(lo, hi), h = rng.uniform(lo, hi);
  const double x = rng.uniform(-200, 800), y = rng.uniform(-200, 800);
  return Box{x, y, x + w, y + h};
}

}  // namespace

TEST_CASE("iou reference values") {
  const Box a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{20, 20, 30, 30}) == 0.0);
  CHECK(iou(a, Box{5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0).epsilon(1e-12));
  CHECK_THROWS_AS(iou(a, Box{5, 5, 5, 9}), ContractError);
}

TEST_CASE("iou is symmetric and bounded") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(testing::oracle_iou(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("encode closed form and fixed point") {
  const Box anchor{5, 5, 15, 15};
  CHECK(encode(anchor, anchor) == BoxDelta{0, 0, 0, 0});
  const BoxDelta d = encode(anchor, Box{2, 5, 22, 15});
  CHECK(d.tx == doctest::Approx(0.2));
  CHECK(d.ty == 0.0);
  CHECK(d.tw == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(d.th == 0.0);
}

TEST_CASE("decode closed form") {
  const Box anchor{0, 0, 10, 10};
  CHECK(decode(anchor, BoxDelta{}).box == anchor);
  const Box b = decode(anchor, BoxDelta{0, 0, std::log(2.0), std::log(2.0)}).box;
  CHECK(b.x1 == doctest::Approx(-5));
  CHECK(b.x2 == doctest::Approx(15));
  CHECK(b.y1 == doctest::Approx(-5));
  CHECK(b.y2 == doctest::Approx(15));
  const DecodeResult big = decode(anchor, BoxDelta{0, 0, 50, -50});
  CHECK(big.clamped);
  CHECK(std::isfinite(big.box.x2));
  CHECK_FALSE(decode(anchor, BoxDelta{0, 0, 19, 0}).clamped);
}

TEST_CASE("encode/decode round trip") {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Box a = random_box(rng), t = random_box(rng);
    const Box r = decode(a, encode(a, t)).box;
    CHECK(std::abs(r.x1 - t.x1) < 1e-9);
    CHECK(std::abs(r.y1 - t.y1) < 1e-9);
    CHECK(std::abs(r.x2 - t.x2) < 1e-9);
    CHECK(std::abs(r.y2 - t.y2) < 1e-9);
  }
}

TEST_CASE("clip_to_image") {
  CHECK(clip_to_image(Box{10, 10, 20, 20}, 100, 100).box == Box{10, 10, 20, 20});
  const ClipResult c = clip_to_image(Box{-5, -5, 5, 5}, 100, 100);
  CHECK(c.box == Box{0, 0, 5, 5});
  CHECK_FALSE(c.degenerate);
  CHECK(clip_to_image(Box{-10, -10, -1, -1}, 100, 100).degenerate);
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const Box b = random_box(rng);
    const ClipResult r = clip_to_image(b, 640, 480);
    if (!r.degenerate) CHECK(r.box.area() <= b.area() + 1e-9);
  }
}

TEST_CASE("flip_horizontal") {
  CHECK(flip_horizontal(Box{10, 0, 20, 5}, 100) == Box{80, 0, 90, 5});
  CHECK(flip_horizontal(Box{40, 3, 60, 9}, 100) == Box{40, 3, 60, 9});
  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    // Quarter-pixel coordinates keep the reflection exact in binary floating point.
    const double x1 = std::floor(rng.uniform(0, 300) * 4) / 4, w = std::floor(rng.uniform(1, 300) * 4) / 4 + 0.25;
    const Box b{x1, 1, x1 + w, 7};
    CHECK(flip_horizontal(flip_horizontal(b, 640), 640) == b);
    CHECK(flip_horizontal(b, 640).area() == b.area());
  }
}
