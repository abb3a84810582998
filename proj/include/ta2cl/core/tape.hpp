// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"

namespace ta2cl {

class GradTape;

/// Handle to a node recorded on a GradTape. Cheap to copy; only valid while
/// the owning tape is alive.
class Var {
 public:
  Var() = default;

  GradTape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Mat& value() const;
  const Mat& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class GradTape;
  Var(GradTape* tape, std::size_t id) : tape_(tape), id_(id) {}

  GradTape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order of the graph; backward() walks it in reverse and calls
/// each node's adjoint rule exactly once. One tape per training step.
class GradTape {
 public:
  /// Propagates grad(self) into the parents' adjoint buffers.
  using BackwardFn = std::function<void(GradTape&, std::size_t self)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var leaf(Mat value) { return push(std::move(value), true, nullptr); }
  Var constant(Mat value) { return push(std::move(value), false, nullptr); }

  Var record(Mat value, std::span<const Var> parents, BackwardFn fn) {
    bool needs = false;
    for (const Var& p : parents) {
      check_owned(p);
      needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }
  Var record(Mat value, std::initializer_list<Var> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(fn));
  }

  const Mat& value(std::size_t id) const { return nodes_.at(id).value; }

  /// Adjoint of a node. Zero-shaped-like-value until backward() has run.
  const Mat& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = Mat(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Adjoint buffer of a parent, or nullptr when it does not need a gradient.
  Mat* grad_target(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Mat(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  void accumulate(std::size_t id, const Mat& g) {
    if (Mat* t = grad_target(id)) add_inplace(*t, g);
  }

  void backward(Var loss) {
    check_owned(loss);
    const Mat& lv = nodes_[loss.id()].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ValueError("backward: loss node must be scalar, got " + lv.shape_str());
    }
    for (Node& n : nodes_) {
      if (n.requires_grad) n.grad = Mat(n.value.rows(), n.value.cols());
    }
    order_.clear();
    nodes_[loss.id()].grad(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      order_.push_back(i);
      if (n.backward) n.backward(*this, i);
    }
  }

  /// Node ids visited by the last backward(), in visiting order.
  std::span<const std::size_t> last_backward_order() const { return order_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    mutable Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Mat value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Mat{}, requires_grad, std::move(fn)});
    return Var(this, nodes_.size() - 1);
  }

  void check_owned(const Var& v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) {
      throw ValueError("GradTape: variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }
inline const Mat& Var::grad() const { return tape_->grad(id_); }

}  // namespace ta2cl
