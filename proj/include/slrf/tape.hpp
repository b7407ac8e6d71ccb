#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "slrf/tensor.hpp"

namespace slrf {

// Handle into a Tape. Plain index so ops can capture it by value.
using VarId = int32_t;

// Reverse-mode tape. Nodes are appended in forward order; backward() walks
// them in reverse, calling each node's pullback. Pullbacks read this node's
// grad and accumulate into input grads, so fan-out sums correctly.
template <class Real>
class Tape {
 public:
  using BackFn = std::function<void(Tape<Real>&)>;

  VarId push(Tensor<Real> value, BackFn back = nullptr) {
    nodes_.push_back(Node{std::move(value), Tensor<Real>{}, std::move(back)});
    return static_cast<VarId>(nodes_.size() - 1);
  }

  // Ops install their pullback after push so the closure can capture the
  // output id.
  void set_back(VarId id, BackFn back) { nodes_[static_cast<size_t>(id)].back = std::move(back); }

  const Tensor<Real>& val(VarId id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<Real>& mutval(VarId id) { return nodes_[static_cast<size_t>(id)].value; }

  Tensor<Real>& grad(VarId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    // A scalar's shape is {} and so is a default-constructed tensor's, so
    // shape equality alone can't tell "allocated" from "never touched" —
    // compare element counts too.
    if (n.grad.shape != n.value.shape || n.grad.v.size() != n.value.v.size())
      n.grad = Tensor<Real>(n.value.shape);
    return n.grad;
  }

  // Seeds d(root)=1 and runs all pullbacks in reverse order. root must be a
  // scalar (numel 1).
  void backward(VarId root) {
    if (val(root).numel() != 1) throw std::logic_error("tape: backward root is not a scalar");
    grad(root).v[0] = Real(1);
    for (size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      // Pullbacks only fire for nodes whose grad was actually accumulated
      // into; nodes off the path from root keep an empty grad and are skipped.
      if (n.back && n.grad.v.size() == n.value.v.size() && !n.value.v.empty()) n.back(*this);
    }
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;  // allocated on first use
    BackFn back;        // null for leaves
  };
  std::vector<Node> nodes_;
};

}  // namespace slrf
