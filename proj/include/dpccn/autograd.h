// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_AUTOGRAD_H_
#define DPCCN_AUTOGRAD_H_

// Minimal reverse-mode differentiation over Tensor values.
//
// Every op returns a Var holding its forward value. When at least one input
// requires a gradient, the result keeps its parents and a backward closure;
// otherwise intermediates are released as soon as the caller drops them, so
// inference runs at forward-only memory cost. A graph is owned by the Vars
// that reference it, which makes concurrent forward passes over shared,
// immutable parameters safe.

#include <functional>
#include <memory>
#include <vector>

#include "dpccn/tensor.h"

namespace dpccn::ag {

struct Node {
  Tensor value;
  const Tensor* external = nullptr;  // non-owning alias (parameters)
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  const Tensor& val() const { return external ? *external : value; }
  // Zero-initialized on first access.
  Tensor& grad_ref();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->val(); }
  const Shape& shape() const { return node_->val().shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }
  // Empty tensor when no gradient reached this node.
  const Tensor& grad() const { return node_->grad; }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(const Tensor& value, bool requires_grad);

// Parents are kept only if one of them requires a gradient.
Var make_result(Tensor value, const std::vector<Var>& parents,
                std::function<void(Node&)> backward);

// Accumulates d(root)/d(leaf) into every reachable leaf. seed has root's shape.
void backward(const Var& root, const Tensor& seed);
// Scalar root; seed 1.
void backward(const Var& root);

}  // namespace dpccn::ag

#endif  // DPCCN_AUTOGRAD_H_
