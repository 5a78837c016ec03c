// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/tensor.hpp"

#include <Eigen/Core>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <utility>

#include "uavdet/error.hpp"

namespace uavdet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

MatMap as_matrix(std::span<double> data, std::int64_t rows, std::int64_t cols) {
  return MatMap(data.data(), rows, cols);
}

ConstMatMap as_matrix(std::span<const double> data, std::int64_t rows, std::int64_t cols) {
  return ConstMatMap(data.data(), rows, cols);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

struct ConvGeometry {
  std::int64_t channels, height, width;
  std::int64_t kh, kw;
  std::int64_t out_h, out_w;
  int stride, pad;
};

// Unfolds x (C×H×W) into (C·kh·kw)×(out_h·out_w).
void im2col(const ConvGeometry& geo, std::span<const double> x, std::span<double> cols) {
  const std::int64_t plane = geo.out_h * geo.out_w;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < geo.channels; ++c) {
    const double* xc = x.data() + c * geo.height * geo.width;
    for (std::int64_t ki = 0; ki < geo.kh; ++ki) {
      for (std::int64_t kj = 0; kj < geo.kw; ++kj, ++row) {
        double* dst = cols.data() + row * plane;
        for (std::int64_t oi = 0; oi < geo.out_h; ++oi) {
          const std::int64_t ii = oi * geo.stride - geo.pad + ki;
          double* drow = dst + oi * geo.out_w;
          if (ii < 0 || ii >= geo.height) {
            std::fill(drow, drow + geo.out_w, 0.0);
            continue;
          }
          const double* xrow = xc + ii * geo.width;
          for (std::int64_t oj = 0; oj < geo.out_w; ++oj) {
            const std::int64_t jj = oj * geo.stride - geo.pad + kj;
            drow[oj] = (jj >= 0 && jj < geo.width) ? xrow[jj] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back onto dx.
void col2im(const ConvGeometry& geo, std::span<const double> cols, std::span<double> dx) {
  const std::int64_t plane = geo.out_h * geo.out_w;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < geo.channels; ++c) {
    double* xc = dx.data() + c * geo.height * geo.width;
    for (std::int64_t ki = 0; ki < geo.kh; ++ki) {
      for (std::int64_t kj = 0; kj < geo.kw; ++kj, ++row) {
        const double* src = cols.data() + row * plane;
        for (std::int64_t oi = 0; oi < geo.out_h; ++oi) {
          const std::int64_t ii = oi * geo.stride - geo.pad + ki;
          if (ii < 0 || ii >= geo.height) continue;
          double* xrow = xc + ii * geo.width;
          const double* srow = src + oi * geo.out_w;
          for (std::int64_t oj = 0; oj < geo.out_w; ++oj) {
            const std::int64_t jj = oj * geo.stride - geo.pad + kj;
            if (jj >= 0 && jj < geo.width) xrow[jj] += srow[oj];
          }
        }
      }
    }
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

std::int64_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range for " + shape_string(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != static_cast<std::int64_t>(data_.size())) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void retain_freed_buffers() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

bool Tensor::all_finite() const {
  return Eigen::Map<const Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size())).allFinite();
}

// ---------------------------------------------------------------------------
// Graph

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this graph");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this graph");
  return nodes_[v.id];
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in constant input");
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in parameter");
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite value in forward pass");
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor& Graph::grad_slot(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (node(loss).value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(node(loss).value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_slot(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (const auto& n : nodes_) {
    if (!n.grad.empty() && !n.grad.all_finite()) throw NumericError("non-finite gradient");
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace ad {

Var conv2d(Graph& g, Var x, Var kernels, int stride, int pad) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(kernels);
  require_rank(xv, 3, "conv2d input");
  require_rank(wv, 4, "conv2d kernels");
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  if (wv.dim(1) != xv.dim(0)) {
    throw DimensionError("conv2d: kernel channels " + std::to_string(wv.dim(1)) +
                         " != input channels " + std::to_string(xv.dim(0)));
  }
  ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(2), wv.dim(3), 0, 0, stride, pad};
  const std::int64_t span_h = geo.height + 2 * pad - geo.kh;
  const std::int64_t span_w = geo.width + 2 * pad - geo.kw;
  if (span_h < 0 || span_w < 0) throw DimensionError("conv2d: kernel larger than padded input");
  if (span_h % stride != 0 || span_w % stride != 0) {
    throw ConfigError("conv2d: stride does not tile the padded input exactly");
  }
  geo.out_h = span_h / stride + 1;
  geo.out_w = span_w / stride + 1;
  const std::int64_t k_out = wv.dim(0);
  const std::int64_t depth = geo.channels * geo.kh * geo.kw;
  const std::int64_t plane = geo.out_h * geo.out_w;

  auto cols = std::make_shared<Buffer>(static_cast<std::size_t>(depth * plane));
  im2col(geo, xv.data(), *cols);
  Tensor out(Shape{k_out, geo.out_h, geo.out_w});
  as_matrix(out.data(), k_out, plane).noalias() =
      as_matrix(wv.data(), k_out, depth) * as_matrix(std::span<const double>(*cols), depth, plane);
  if (!g.requires_grad(kernels)) cols.reset();

  return g.record(std::move(out), {x, kernels}, [=](Graph& gr, const Tensor& dy) {
    const auto dy_m = as_matrix(dy.data(), k_out, plane);
    if (gr.requires_grad(kernels)) {
      as_matrix(gr.grad_slot(kernels).data(), k_out, depth).noalias() +=
          dy_m * as_matrix(std::span<const double>(*cols), depth, plane).transpose();
    }
    if (gr.requires_grad(x)) {
      Buffer dcols(static_cast<std::size_t>(depth * plane));
      as_matrix(std::span<double>(dcols), depth, plane).noalias() =
          as_matrix(gr.value(kernels).data(), k_out, depth).transpose() * dy_m;
      col2im(geo, dcols, gr.grad_slot(x).data());
    }
  });
}

Var add_channel_bias(Graph& g, Var x, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& bv = g.value(bias);
  require_rank(xv, 3, "add_channel_bias input");
  require_rank(bv, 1, "add_channel_bias bias");
  if (bv.dim(0) != xv.dim(0)) throw DimensionError("add_channel_bias: channel count mismatch");
  const std::int64_t channels = xv.dim(0);
  const std::int64_t plane = xv.dim(1) * xv.dim(2);
  Tensor out = xv;
  for (std::int64_t c = 0; c < channels; ++c) {
    double* p = out.data().data() + c * plane;
    for (std::int64_t i = 0; i < plane; ++i) p[i] += bv[c];
  }
  return g.record(std::move(out), {x, bias}, [=](Graph& gr, const Tensor& dy) {
    if (gr.requires_grad(x)) {
      auto dx = gr.grad_slot(x).data();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    }
    if (gr.requires_grad(bias)) {
      Tensor& db = gr.grad_slot(bias);
      for (std::int64_t c = 0; c < channels; ++c) {
        const double* p = dy.data().data() + c * plane;
        double s = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) s += p[i];
        db[c] += s;
      }
    }
  });
}

Var relu(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return g.record(std::move(out), {x}, [=](Graph& gr, const Tensor& dy) {
    const auto xv = gr.value(x).data();
    auto dx = gr.grad_slot(x).data();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > 0.0) dx[i] += dy[i];
    }
  });
}

Var max_pool(Graph& g, Var x, int window, int stride) {
  const Tensor& xv = g.value(x);
  if (xv.rank() < 2) throw DimensionError("max_pool: input needs at least two axes");
  if (window < 1 || stride < 1) throw ConfigError("max_pool: window and stride must be >= 1");
  const std::int64_t h = xv.dim(xv.rank() - 2);
  const std::int64_t w = xv.dim(xv.rank() - 1);
  if (h < window || w < window || (h - window) % stride != 0 || (w - window) % stride != 0) {
    throw ConfigError("max_pool: window " + std::to_string(window) + " / stride " +
                      std::to_string(stride) + " does not cover " + shape_string(xv.shape()) +
                      " without partial windows");
  }
  const std::int64_t oh = (h - window) / stride + 1;
  const std::int64_t ow = (w - window) / stride + 1;
  const std::int64_t planes = static_cast<std::int64_t>(xv.size()) / (h * w);
  Shape out_shape = xv.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  Tensor out(out_shape);
  std::vector<std::int64_t> argmax(out.size());
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = xv.data().data() + p * h * w;
    for (std::int64_t oi = 0; oi < oh; ++oi) {
      for (std::int64_t oj = 0; oj < ow; ++oj) {
        std::int64_t best = (oi * stride) * w + oj * stride;
        for (std::int64_t a = 0; a < window; ++a) {
          for (std::int64_t b = 0; b < window; ++b) {
            const std::int64_t idx = (oi * stride + a) * w + oj * stride + b;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::int64_t o = p * oh * ow + oi * ow + oj;
        out[static_cast<std::size_t>(o)] = src[best];
        argmax[static_cast<std::size_t>(o)] = p * h * w + best;
      }
    }
  }
  return g.record(std::move(out), {x}, [x, argmax = std::move(argmax)](Graph& gr, const Tensor& dy) {
    auto dx = gr.grad_slot(x).data();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[static_cast<std::size_t>(argmax[o])] += dy[o];
  });
}

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  const Tensor& bv = g.value(bias);
  require_rank(xv, 2, "linear input");
  require_rank(wv, 2, "linear weight");
  require_rank(bv, 1, "linear bias");
  const std::int64_t n = xv.dim(0), d = xv.dim(1), m = wv.dim(1);
  if (wv.dim(0) != d || bv.dim(0) != m) {
    throw DimensionError("linear: " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()) +
                         " + " + shape_string(bv.shape()));
  }
  Tensor out(Shape{n, m});
  auto out_m = as_matrix(out.data(), n, m);
  out_m.noalias() = as_matrix(xv.data(), n, d) * as_matrix(wv.data(), d, m);
  out_m.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data().data(), m);
  return g.record(std::move(out), {x, weight, bias}, [=](Graph& gr, const Tensor& dy) {
    const auto dy_m = as_matrix(dy.data(), n, m);
    if (gr.requires_grad(x)) {
      as_matrix(gr.grad_slot(x).data(), n, d).noalias() +=
          dy_m * as_matrix(gr.value(weight).data(), d, m).transpose();
    }
    if (gr.requires_grad(weight)) {
      as_matrix(gr.grad_slot(weight).data(), d, m).noalias() +=
          as_matrix(gr.value(x).data(), n, d).transpose() * dy_m;
    }
    if (gr.requires_grad(bias)) {
      Eigen::Map<Eigen::RowVectorXd>(gr.grad_slot(bias).data().data(), m) += dy_m.colwise().sum();
    }
  });
}

Var softmax_rows(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require_rank(xv, 2, "softmax_rows");
  const std::int64_t n = xv.dim(0), m = xv.dim(1);
  Tensor out(xv.shape());
  for (std::int64_t r = 0; r < n; ++r) {
    const double* in = xv.data().data() + r * m;
    double* o = out.data().data() + r * m;
    const double mx = *std::max_element(in, in + m);
    double z = 0.0;
    for (std::int64_t c = 0; c < m; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::int64_t c = 0; c < m; ++c) o[c] /= z;
  }
  const Var self{g.size()};
  return g.record(std::move(out), {x}, [=](Graph& gr, const Tensor& dy) {
    const Tensor& p = gr.value(self);
    auto dx = gr.grad_slot(x).data();
    for (std::int64_t r = 0; r < n; ++r) {
      const double* pr = p.data().data() + r * m;
      const double* gr_row = dy.data().data() + r * m;
      double dot = 0.0;
      for (std::int64_t c = 0; c < m; ++c) dot += pr[c] * gr_row[c];
      for (std::int64_t c = 0; c < m; ++c) dx[static_cast<std::size_t>(r * m + c)] += pr[c] * (gr_row[c] - dot);
    }
  });
}

Var reshape(Graph& g, Var x, Shape shape) {
  Tensor out = g.value(x).reshaped(std::move(shape));
  return g.record(std::move(out), {x}, [=](Graph& gr, const Tensor& dy) {
    auto dx = gr.grad_slot(x).data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

Var channels_to_rows(Graph& g, Var x, int group) {
  const Tensor& xv = g.value(x);
  require_rank(xv, 3, "channels_to_rows");
  const std::int64_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
  if (group < 1 || c % group != 0) throw DimensionError("channels_to_rows: group does not divide channels");
  Tensor out(Shape{plane * (c / group), group});
  // Output is the (plane × c) transpose of the (c × plane) input.
  as_matrix(out.data(), plane, c) = as_matrix(xv.data(), c, plane).transpose();
  return g.record(std::move(out), {x}, [=](Graph& gr, const Tensor& dy) {
    as_matrix(gr.grad_slot(x).data(), c, plane) += as_matrix(dy.data(), plane, c).transpose();
  });
}

Var pad_to_multiple(Graph& g, Var x, int multiple) {
  const Tensor& xv = g.value(x);
  require_rank(xv, 3, "pad_to_multiple");
  if (multiple < 1) throw ConfigError("pad_to_multiple: multiple must be >= 1");
  const std::int64_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::int64_t ph = (h + multiple - 1) / multiple * multiple;
  const std::int64_t pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return x;
  Tensor out(Shape{c, ph, pw});
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t i = 0; i < h; ++i) {
      const double* src = xv.data().data() + (k * h + i) * w;
      std::copy(src, src + w, out.data().data() + (k * ph + i) * pw);
    }
  }
  return g.record(std::move(out), {x}, [=](Graph& gr, const Tensor& dy) {
    auto dx = gr.grad_slot(x).data();
    for (std::int64_t k = 0; k < c; ++k) {
      for (std::int64_t i = 0; i < h; ++i) {
        const double* src = dy.data().data() + (k * ph + i) * pw;
        double* dst = dx.data() + (k * h + i) * w;
        for (std::int64_t j = 0; j < w; ++j) dst[j] += src[j];
      }
    }
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.shape() != bv.shape()) {
    throw DimensionError("add: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record(std::move(out), {a, b}, [=](Graph& gr, const Tensor& dy) {
    for (Var v : {a, b}) {
      if (!gr.requires_grad(v)) continue;
      auto d = gr.grad_slot(v).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(std::move(out), {a, b}, [=](Graph& gr, const Tensor& dy) {
    // Read both values before touching slots; a and b may be the same node.
    const Tensor& ta = gr.value(a);
    const Tensor& tb = gr.value(b);
    if (gr.requires_grad(a)) {
      auto d = gr.grad_slot(a).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * tb[i];
    }
    if (gr.requires_grad(b)) {
      auto d = gr.grad_slot(b).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * ta[i];
    }
  });
}

Var scale(Graph& g, Var x, double factor) {
  Tensor out = g.value(x);
  for (double& v : out.data()) v *= factor;
  return g.record(std::move(out), {x}, [=](Graph& gr, const Tensor& dy) {
    auto d = gr.grad_slot(x).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * dy[i];
  });
}

Var sum(Graph& g, Var x) {
  const auto xv = g.value(x).data();
  double s = 0.0;
  for (double v : xv) s += v;
  return g.record(Tensor::scalar(s), {x}, [=](Graph& gr, const Tensor& dy) {
    auto d = gr.grad_slot(x).data();
    const double up = dy[0];
    for (double& v : d) v += up;
  });
}

}  // namespace ad
}  // namespace uavdet
