#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "pvcast/tensor.hpp"

namespace pvcast {

class Graph;

enum class OpKind {
  input,
  parameter,
  matmul,
  batched_matmul,
  transpose,
  add,
  sub,
  mul,
  scale,
  sigmoid,
  tanh,
  softmax,
  concat,
  slice,
  take,
  stack,
  reshape,
  sum,
  kl_divergence,
  mean_squared_error,
};

std::string_view op_name(OpKind kind);

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::span<const double> grad() const;
};

/// Dynamic reverse-mode tape.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it and
/// the backward sweep is a plain reverse walk over the insertion order. Parameter
/// leaves write their gradients straight into the bound Tensor's grad buffer,
/// accumulating across calls until the caller zeroes them.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    BackwardFn backward;
    Tensor* parameter = nullptr;
  };

  /// With `grad_enabled == false` no backward closures are recorded and
  /// parameters bind as constants.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value);
  /// Binds a parameter tensor. The tensor must outlive the backward pass.
  Var param(Tensor& parameter);

  /// Appends an op node. `backward` is dropped when no input requires a gradient.
  /// Throws DomainError when finite inputs produce a non-finite output.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  void backward(Var loss);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of `id`, allocated on first use. Only valid inside backward.
  std::span<double> grad_buffer(std::size_t id);

  /// Optional observer of the backward walk order (used by tests).
  void on_backward_visit(std::function<void(std::size_t)> fn) { visit_hook_ = std::move(fn); }

 private:
  bool grad_enabled_;
  std::deque<Node> nodes_;  // stable references across appends
  std::function<void(std::size_t)> visit_hook_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All results live in the operands' graph.

/// (..., m, k) x (k, n) -> (..., m, n). Leading axes of `a` are flattened.
Var matmul(Var a, Var b);
/// (B, m, k) x (B, k, n) -> (B, m, n).
Var batched_matmul(Var a, Var b);
/// Swaps the last two axes.
Var transpose(Var x);

/// Elementwise binary ops. The shape of `b` must equal `a`'s or a suffix of it;
/// in the latter case `b` is broadcast over the leading axes of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);

Var sigmoid(Var x);
Var tanh(Var x);
/// Softmax over the last axis with max subtraction. NaN input is a DomainError.
Var softmax(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(Var a, Var b, std::size_t axis);
/// `length` entries of `axis` starting at `begin`; the axis is kept.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t length);
/// Entry `index` of `axis`; the axis is removed.
Var take(Var x, std::size_t axis, std::size_t index);
/// Stacks equally shaped tensors along a new axis.
Var stack(std::span<const Var> parts, std::size_t axis);
Var reshape(Var x, Shape shape);
/// Sum of all entries, shape [1].
Var sum(Var x);

/// Mean over the leading (batch) axis of per-sample KL divergences
/// sum_{t,i} -P ln(max(F, floor) / max(P, floor)). Entries with P == 0 contribute nothing.
/// `forecast` and `target` share a shape whose leading axis is the batch.
Var kl_divergence(Var forecast, const Tensor& target, double floor);
/// Mean over the leading (batch) axis of per-sample mean squared errors.
Var mean_squared_error(Var forecast, const Tensor& target);

}  // namespace pvcast
