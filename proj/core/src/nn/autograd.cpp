#include "tsdet/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace tsdet::nn {

namespace {
thread_local int t_no_grad_depth = 0;
}

bool grad_enabled() { return t_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++t_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --t_no_grad_depth; }

void GradStore::add(const Node* node, const Tensor& g) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    grads_.emplace(node, g);
  } else {
    it->second.add_(g);
  }
}

void GradStore::add_scaled(const Node* node, const Tensor& g, Scalar factor) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    Tensor scaled = g;
    scaled.scale_(factor);
    grads_.emplace(node, std::move(scaled));
  } else {
    Tensor& acc = it->second;
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += factor * g.data[i];
  }
}

const Tensor* GradStore::find(const Node* node) const {
  auto it = grads_.find(node);
  return it == grads_.end() ? nullptr : &it->second;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var leaf(Tensor value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(const Tensor&, GradStore&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents) {
      if (p && p->requires_grad) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

GradStore backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward on null var");
  if (root->value.numel() != 1) throw std::invalid_argument("backward requires a scalar root");

  // Post-order over the requires_grad subgraph, iteratively.
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  struct Frame {
    const Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (root->requires_grad) {
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      const Node* p = f.node->parents[f.next_parent++].get();
      if (p && p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  GradStore store;
  if (!root->requires_grad) return store;
  store.add(root.get(), Tensor(root->value.shape, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (!node->backward_fn) continue;
    const Tensor* g = store.find(node);
    if (!g) continue;
    // Copy: backward_fn may grow the store and invalidate the reference.
    Tensor grad = *g;
    node->backward_fn(grad, store);
  }
  return store;
}

}  // namespace tsdet::nn
