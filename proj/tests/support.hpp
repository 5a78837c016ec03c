// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test helpers: random tensors, a central-difference gradient checker and
// straightforward reference implementations used as oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "uavdet/box.hpp"
#include "uavdet/random.hpp"
#include "uavdet/tensor.hpp"

namespace uavdet::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values whose pairwise gaps and distance from zero exceed `margin`, so
// max/ReLU kinks stay far from finite-difference probes.
inline Tensor separated_tensor(Rng& rng, Shape shape, double margin = 1e-3) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const double n = static_cast<double>(t.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    // Evenly spaced levels in [-1, 1] with a gap around zero, then jittered.
    double v = -1.0 + 2.0 * (static_cast<double>(k) + 0.5) / n;
    v += rng.uniform(-0.25, 0.25) * (2.0 / n);
    if (std::abs(v) < margin) v = v < 0 ? -margin * 2 : margin * 2;
    t[order[k]] = v;
  }
  return t;
}

using LossFn = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheck {
  double directional_rel = 0.0;  // worst over inputs: |<g,d> − fd| / max(|<g,d>|, |fd|)
  double entry_rel = 0.0;        // worst over inputs: max|g − fd| / max(max|g|, max|fd|)
  bool ok(double tol) const { return directional_rel <= tol && entry_rel <= tol; }
};

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  return g.value(f(g, vars)).item();
}

inline double rel_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-12) return 0.0;
  return std::abs(a - b) / scale;
}

// Compares reverse-mode gradients of f against central differences. Every
// entry is probed when an input has at most `max_entries` values, otherwise
// a random subset of that size.
inline GradCheck check_gradients(const LossFn& f, std::vector<Tensor> inputs, Rng& rng, double h = 1e-5,
                                 std::size_t max_entries = 48) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.parameter(t));
  g.backward(f(g, vars));
  std::vector<Tensor> grads;
  for (Var v : vars) grads.push_back(g.grad(v));

  GradCheck out;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    Tensor& x = inputs[a];
    const Tensor& gx = grads[a];

    Tensor dir(x.shape());
    double analytic = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] = rng.uniform(-1.0, 1.0);
      analytic += gx[i] * dir[i];
    }
    const Tensor saved = x;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = saved[i] + h * dir[i];
    const double up = eval_loss(f, inputs);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = saved[i] - h * dir[i];
    const double down = eval_loss(f, inputs);
    x = saved;
    out.directional_rel = std::max(out.directional_rel, rel_gap(analytic, (up - down) / (2 * h)));

    std::vector<std::size_t> probe(x.size());
    std::iota(probe.begin(), probe.end(), 0);
    if (probe.size() > max_entries) probe = rng.choose(probe, max_entries);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i : probe) {
      const double keep = x[i];
      x[i] = keep + h;
      const double fu = eval_loss(f, inputs);
      x[i] = keep - h;
      const double fdn = eval_loss(f, inputs);
      x[i] = keep;
      const double fd = (fu - fdn) / (2 * h);
      worst = std::max(worst, std::abs(fd - gx[i]));
      scale = std::max({scale, std::abs(fd), std::abs(gx[i])});
    }
    if (scale > 1e-12) out.entry_rel = std::max(out.entry_rel, worst / scale);
  }
  return out;
}

// Weighted sum with fixed random weights: turns any op output into a scalar
// whose gradient exercises every output entry differently.
inline Var weighted_sum(Graph& g, Var x, const Tensor& weights) {
  return ad::sum(g, ad::mul(g, x, g.constant(weights)));
}

// Reference implementations.

inline Tensor naive_conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
  const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto n = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  Tensor out(Shape{n, oh, ow});
  for (std::int64_t o = 0; o < n; ++o)
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::int64_t ch = 0; ch < c; ++ch)
          for (std::int64_t u = 0; u < kh; ++u)
            for (std::int64_t v = 0; v < kw; ++v) {
              const auto y = i * stride + u - pad, xx = j * stride + v - pad;
              if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
              acc += x[static_cast<std::size_t>((ch * h + y) * w + xx)] *
                     k[static_cast<std::size_t>(((o * c + ch) * kh + u) * kw + v)];
            }
        out[static_cast<std::size_t>((o * oh + i) * ow + j)] = acc;
      }
  return out;
}

inline Tensor naive_max_pool(const Tensor& x, int window, int stride) {
  const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor out(Shape{c, oh, ow});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        for (int u = 0; u < window; ++u)
          for (int v = 0; v < window; ++v)
            best = std::max(best, x[static_cast<std::size_t>((ch * h + i * stride + u) * w + j * stride + v)]);
        out[static_cast<std::size_t>((ch * oh + i) * ow + j)] = best;
      }
  return out;
}

inline Tensor naive_matmul_bias(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto n = x.dim(0), d = x.dim(1), m = w.dim(1);
  Tensor out(Shape{n, m});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = b[static_cast<std::size_t>(j)];
      for (std::int64_t k = 0; k < d; ++k) acc += x[static_cast<std::size_t>(i * d + k)] * w[static_cast<std::size_t>(k * m + j)];
      out[static_cast<std::size_t>(i * m + j)] = acc;
    }
  return out;
}

inline double oracle_iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// O(n²) greedy suppression: pick the best remaining box by (score, −index)
// through a full scan each round.
inline std::vector<std::size_t> brute_force_nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                                                double threshold) {
  const std::size_t n = boxes.size();
  std::vector<char> alive(n, 1);
  std::vector<std::size_t> keep;
  for (;;) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      if (best == n || scores[i] > scores[best]) best = i;
    }
    if (best == n) break;
    keep.push_back(best);
    alive[best] = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alive[i] && oracle_iou(boxes[best], boxes[i]) > threshold) alive[i] = 0;
    }
  }
  return keep;
}

// AP from every distinct score threshold: the operating point at threshold t
// keeps all detections scoring ≥ t. Area under max{precision : recall ≥ r}.
inline double brute_force_ap(const std::vector<bool>& tp, const std::vector<double>& scores, std::size_t num_gt) {
  const std::set<double> thresholds(scores.begin(), scores.end());
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  for (double t : thresholds) {
    std::size_t kept = 0, hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++kept;
        hits += tp[i] ? 1 : 0;
      }
    }
    points.emplace_back(static_cast<double>(hits) / static_cast<double>(num_gt),
                        static_cast<double>(hits) / static_cast<double>(kept));
  }
  std::set<double> recalls;
  for (const auto& p : points) recalls.insert(p.first);
  double ap = 0.0, prev = 0.0;
  for (double r : recalls) {
    double best = 0.0;
    for (const auto& p : points) {
      if (p.first >= r) best = std::max(best, p.second);
    }
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

// Bilinear crop of a C×H×W map sampled at align-corners points of a
// feature-space box, with edge clamping; written per sample point.
inline double oracle_sample(const Tensor& f, std::int64_t ch, double y, double x) {
  const auto h = f.dim(1), w = f.dim(2);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::int64_t>(std::floor(y)), x0 = static_cast<std::int64_t>(std::floor(x));
  const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  auto at = [&](std::int64_t yy, std::int64_t xx) { return f[static_cast<std::size_t>((ch * h + yy) * w + xx)]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

}  // namespace uavdet::testing
