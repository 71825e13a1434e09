#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsdet/nn/tensor.hpp"

namespace tsdet::nn {

class Node;
using Var = std::shared_ptr<Node>;

// Gradients accumulated during one backward pass, keyed by node identity.
// Keeping them out of the nodes lets several per-image graphs that share the
// same parameter leaves run backward concurrently.
class GradStore {
 public:
  void add(const Node* node, const Tensor& g);
  void add_scaled(const Node* node, const Tensor& g, Scalar factor);
  const Tensor* find(const Node* node) const;
  bool empty() const { return grads_.empty(); }

 private:
  friend GradStore backward(const Var&);
  std::unordered_map<const Node*, Tensor> grads_;
};

// One vertex of a reverse-mode tape. Graphs are built define-by-run and are
// DAGs: children hold shared_ptrs to parents, never the reverse.
class Node {
 public:
  Tensor value;
  bool requires_grad = false;
  std::string name;  // set for parameters only
  std::vector<Var> parents;
  // Receives the incoming gradient for this node and accumulates gradients
  // for the parents into the store.
  std::function<void(const Tensor& grad_out, GradStore&)> backward_fn;
};

// Leaf holding a constant (no gradient tracked).
Var constant(Tensor value);

// Leaf that participates in backward (parameters, gradcheck inputs).
Var leaf(Tensor value, std::string name = {});

// Interior node; drops the tape when no parent requires a gradient or when
// grads are globally disabled.
Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(const Tensor&, GradStore&)> backward_fn);

// Runs reverse-mode accumulation from a scalar root.
GradStore backward(const Var& root);

bool grad_enabled();

// RAII switch that disables tape recording (inference mode).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

}  // namespace tsdet::nn
