#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "fuzzyseg/tensor.hpp"

// Tape-based reverse-mode differentiation. A Graph records nodes in creation
// order, which is a valid topological order; backward() walks the tape once
// in reverse. A graph is owned by one thread and is not reentrant.
//
// Closed primitive set (everything else in the project is composed from it):
//   elementwise: add, sub, mul, scale, add_scalar, scale_channels, silu
//   exp, log (with optional floor)
//   softmax along an axis
//   reductions: sum, mean
//   matmul, conv2d (zero padding), upsample_nearest, upsample_bilinear
//   gather_classes, masked_select, select_pixels, cosine_similarity

namespace fuzzyseg::tk {

class Graph;

class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn =
      std::function<void(Graph&, const Tensor& out_value, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Appends an op node. `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  // Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }

  // Accumulated gradient; zeros if nothing flowed into the node.
  Tensor grad(Var v) const;

  // Mutable gradient accumulator, allocated on first use. Used by backward
  // functions; a no-op sink is returned for nodes without requires_grad.
  Tensor& grad_buffer(Var v);

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  // deque: references returned by value() survive later appends.
  std::deque<Node> nodes_;
  Tensor sink_;
  std::size_t backward_visits_ = 0;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

// --- primitives -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// x: [N,C,H,W], factors: [N,C] constant; y = x * factors[n,c].
Var scale_channels(Var x, const Tensor& factors);

// x * sigmoid(x)
Var silu(Var x);
Var exp(Var x);

// log(max(x, floor)); gradient is zero where the floor is active.
Var log(Var x, double floor = 0.0);

Var softmax(Var x, std::size_t axis);

// Scalar results have shape {1}.
Var sum(Var x);
Var mean(Var x);

// a: [M,K], b: [K,N]
Var matmul(Var a, Var b);

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], bias: [Cout] (may be invalid Var).
Var conv2d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad);

// Integer upscaling by repetition.
Var upsample_nearest(Var x, std::size_t factor);

// Half-pixel-centred bilinear resize of the two trailing axes.
Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w);

// x: [N,C,H,W], index: {N,H,W} with values in [0,C). Returns [N,H,W].
Var gather_classes(Var x, const LabelMap& index);

// Flattened entries where mask != 0; mask has x's shape. Returns [P].
Var masked_select(Var x, const Tensor& mask);

// x: [N,D,H,W], mask: [N,H,W]. Returns the selected pixel vectors as [P,D]
// in row-major (n,h,w) order.
Var select_pixels(Var x, const Tensor& mask);

// Row-wise cosine similarity of a,b: [P,D] -> [P]. Norms are floored at
// `norm_floor`, so a zero row yields cosine 0.
Var cosine_similarity(Var a, Var b, double norm_floor = 1e-12);

// --- non-differentiable helpers --------------------------------------------

Tensor softmax_values(const Tensor& x, std::size_t axis);

// Row-major lists of (index, weight) pairs for a half-pixel bilinear resize
// along one axis of length `in` to `out`.
struct BilinearTaps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w1;
};
BilinearTaps bilinear_taps(std::size_t in, std::size_t out);

}  // namespace fuzzyseg::tk
