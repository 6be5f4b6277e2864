#pragma once

// Reverse-mode differentiation over dense 2-D tensors.
//
// A Tape records every operation applied to its Vars. Values are immutable
// once recorded; backward() walks the record in reverse and returns the
// gradient of a scalar root with respect to every variable leaf.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nnsb/tensor.hpp"

namespace nnsb {

using NodeId = std::uint32_t;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  NodeId id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients of a root with respect to variable leaves, keyed by node id.
class GradientMap {
 public:
  bool contains(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  bool contains(Var v) const { return contains(v.id()); }
  /// Throws ContractViolation when the node has no gradient (not reachable).
  const Tensor& at(NodeId id) const;
  const Tensor& at(Var v) const { return at(v.id()); }

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  /// Accumulates d(root)/d(input_k) into grads[k]. Entries are null for
  /// inputs that do not require a gradient.
  using BackwardFn =
      std::function<void(const Tape& tape, const Tensor& grad_out, std::span<Tensor* const> grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (a trainable parameter or a probed input).
  Var variable(Tensor value);

  /// Records the result of an operation on `inputs`. When no input requires a
  /// gradient the node is stored as a constant and `backward` is dropped.
  Var record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Root must be 1x1. Gradients are returned for every variable leaf the
  /// root depends on.
  GradientMap backward(Var root) const;

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  // deque keeps value() references valid while the tape grows.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// Recorded operations. Binary elementwise ops require identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

/// (n x k) * (k x m).
Var matmul(Var a, Var b);
/// x * W^T + b for x (n x in), W (out x in), b (1 x out).
Var affine(Var x, Var weight, Var bias);

Var tanh(Var a);
/// Subgradient at 0 is 0.
Var relu(Var a);
/// Throws DomainError when any element is <= 0.
Var log(Var a);
Var exp(Var a);
Var square(Var a);
/// Subgradient at 0 is 0.
Var abs(Var a);
/// max(a, floor); elements at or below the floor pass no gradient.
Var clamp_min(Var a, double floor);

/// Sum of all elements, 1x1.
Var sum(Var a);
/// Mean of all elements, 1x1.
Var mean(Var a);
/// Row-wise sum, n x 1.
Var row_sum(Var a);

/// out.row(i) = a.row(index[i]).
Var gather_rows(Var a, std::vector<std::size_t> index);
/// out.row(segment[i]) += a.row(i); output has `segments` rows.
Var segment_sum(Var a, std::vector<std::size_t> segment, std::size_t segments);
/// Columns [begin, end).
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// out(i, j) = |a.row(i) - a.row(j)|^2, n x n.
Var pairwise_sq_dist(Var a);
/// Mean over rows of -log softmax(logits.row(i))[labels[i]].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace nnsb
