// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/autograd.h"

#include <algorithm>
#include <unordered_set>

#include "dpccn/error.h"

namespace dpccn::ag {

Tensor& Node::grad_ref() {
  if (grad.empty() && val().size() > 0) grad = Tensor(val().shape());
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(const Tensor& value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->external = &value;
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var make_result(Tensor value, const std::vector<Var>& parents,
                std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = std::any_of(parents.begin(), parents.end(),
                           [](const Var& p) { return p.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.ptr());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) return;
  DPCCN_CHECK_ARG(seed.shape() == root.shape(),
                  "backward seed shape mismatch");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&root.node(), 0);
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor& g = root.node().grad_ref();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      // Interior gradients are no longer needed once propagated.
      if (!node->parents.empty()) node->grad = Tensor();
    }
  }
}

void backward(const Var& root) {
  DPCCN_CHECK_ARG(root.value().size() == 1, "backward() needs a scalar root");
  backward(root, Tensor(root.shape(), 1.0));
}

}  // namespace dpccn::ag
