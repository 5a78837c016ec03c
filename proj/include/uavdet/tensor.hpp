// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors and a tape-based reverse-mode differentiation graph.
// Only the primitives the detector needs are provided; shapes are always
// explicit and the only broadcasting is the per-channel / per-column bias add.

#pragma once

#include <cstddef>
#include <deque>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace uavdet {

using Shape = std::vector<std::int64_t>;

std::string shape_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

// 64-byte aligned storage.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

// Keeps freed buffers in the heap instead of returning them to the OS, so
// per-iteration activations do not page-fault afresh. No-op outside glibc.
void retain_freed_buffers();

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Buffer data_;
};

// Handle to a node of a Graph.
struct Var {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Graph;

// Propagates the output gradient of a node into its inputs' gradient slots.
using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

// Records operations in creation order, which is also a topological order.
// A Graph belongs to a single thread; separate graphs are independent.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf whose gradient is collected by backward().
  Var parameter(Tensor value);

  // Records a derived node. The node requires a gradient iff any input does;
  // `backward` is only kept in that case. Throws NumericError on NaN/Inf.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Gradient of the last backward() loss wrt v; zeros when v was not reached.
  Tensor grad(Var v) const;

  // Gradient slot of v, allocated with zeros on first use. Used by backward
  // functions to accumulate contributions.
  Tensor& grad_slot(Var v);

  // Reverse sweep from a scalar loss. Every node is visited exactly once and
  // fan-out contributions are summed.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  Node& node(Var v);

  std::deque<Node> nodes_;  // stable references across record()
};

namespace ad {

// Cross-correlation of x (C×H×W) with kernels (K×C×kh×kw). Output extent is
// (H + 2·pad − kh)/stride + 1 and the division must be exact.
Var conv2d(Graph& g, Var x, Var kernels, int stride, int pad);

// x (C×H×W) plus bias (C) broadcast over the spatial extent.
Var add_channel_bias(Graph& g, Var x, Var bias);

// Elementwise max(0, x); subgradient 0 at x == 0.
Var relu(Graph& g, Var x);

// Max pooling over the last two axes; leading axes are treated as channels.
// (H − window) must be divisible by stride. Ties go to the first element in
// row-major order of the window.
Var max_pool(Graph& g, Var x, int window, int stride);

// x (N×D) · weight (D×M) + bias (M).
Var linear(Graph& g, Var x, Var weight, Var bias);

// Row-wise softmax of an N×M tensor.
Var softmax_rows(Graph& g, Var x);

Var reshape(Graph& g, Var x, Shape shape);

// C×H×W → (H·W·C/group)×group, location-major. Channel c of location l
// lands in row l·(C/group) + c/group, column c % group.
Var channels_to_rows(Graph& g, Var x, int group);

// Zero-pads the bottom/right of a C×H×W tensor up to multiples of `multiple`.
Var pad_to_multiple(Graph& g, Var x, int multiple);

Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
Var sum(Graph& g, Var x);

}  // namespace ad

}  // namespace uavdet
