#pragma once

#include <functional>
#include <vector>

#include "ticket/tensor.hpp"

namespace ticket {

enum class Pad { Valid, Same };

/// Reverse-mode autodiff tape. Records forward ops in topological order and
/// replays their backward rules in reverse. A tape is confined to one thread;
/// independent tapes may run concurrently.
class Tape {
 public:
  struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }

  // Elementwise / structural ops.
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var relu(Var x);
  Var flatten(Var x);  // (N, ...) -> (N, rest)
  Var sum(Var x);      // scalar, 64-bit accumulation

  /// x: (N,M) + b: (M), or x: (N,C,H,W) + b: (C). The only broadcast allowed.
  Var bias_add(Var x, Var b);

  /// a: (m,k), b: (k,n) -> (m,n)
  Var matmul(Var a, Var b);

  /// x: (N,C,H,W), k: (F,C,KH,KW), stride 1. Same padding requires odd kernels.
  Var conv2d(Var x, Var k, Pad pad);

  /// 2x2 window, stride 2; H and W must be even.
  Var maxpool2x2(Var x);

  /// logits: (N,k), labels in [0,k). Mean NLL over the batch, log-sum-exp
  /// stabilized with 64-bit accumulation.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

  /// Mean over the batch of margin(z, y) = z_y - max_{j != y} z_j.
  Var cw_margin_mean(Var logits, const std::vector<int>& labels);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node,
  /// visiting nodes exactly once in reverse recording order.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Node&)> back;  // null for leaves
  };

  Node& node(Var v) {
    check(v.valid() && v.idx < static_cast<int>(nodes_.size()), "invalid tape var");
    return nodes_[static_cast<std::size_t>(v.idx)];
  }
  const Node& node(Var v) const {
    check(v.valid() && v.idx < static_cast<int>(nodes_.size()), "invalid tape var");
    return nodes_[static_cast<std::size_t>(v.idx)];
  }

  Var push(Tensor value, std::function<void(Tape&, const Node&)> back);

  std::vector<Node> nodes_;
};

}  // namespace ticket
