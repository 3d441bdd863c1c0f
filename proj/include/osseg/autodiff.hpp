#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "osseg/tensor.hpp"

namespace osseg::ad {

// Reverse-mode automatic differentiation over dense tensors. Nodes form a DAG
// owned through shared_ptr parents; releasing the root frees the graph.
// Gradients accumulate (+=) so shared subexpressions are handled naturally.
//
// Ops built from inputs that do not require gradients skip closure and parent
// bookkeeping entirely, so frozen-network forward passes cost only the math.
template <class T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT<T>>> parents;
  std::function<void(NodeT<T>&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad = TensorT<T>(value.shape());
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.values().begin(), grad.values().end(), T(0));
  }
};

template <class T>
using VarT = std::shared_ptr<NodeT<T>>;
using Var = VarT<float>;

template <class T>
VarT<T> constant(TensorT<T> v) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  n->requires_grad = false;
  return n;
}

template <class T>
VarT<T> parameter(TensorT<T> v) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

template <class T>
VarT<T> detach(const VarT<T>& v) {
  return constant(TensorT<T>(v->value));
}

template <class T>
VarT<T> make_op(TensorT<T> value, std::vector<VarT<T>> parents,
                std::function<void(NodeT<T>&)> backward) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(value);
  n->requires_grad = false;
  for (const auto& p : parents) n->requires_grad |= p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return n;
}

// Backpropagate from a scalar root (size-1 value). Accumulates into the grad
// buffers of every reachable node that requires gradients.
template <class T>
void backward(const VarT<T>& root) {
  require(root->value.size() == 1, "backward root must be a scalar");
  if (!root->requires_grad) return;

  // iterative post-order topological sort
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> seen;
  std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- elementwise arithmetic -------------------------------------------------

template <class T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  require(a->value.shape() == b->value.shape(), "add: shape mismatch");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
    }
  });
}

template <class T>
VarT<T> sub(VarT<T> a, VarT<T> b) {
  require(a->value.shape() == b->value.shape(), "sub: shape mismatch");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
    }
  });
}

template <class T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
  require(a->value.shape() == b->value.shape(), "mul: shape mismatch");
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::int64_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i] * a->value[i];
    }
  });
}

template <class T>
VarT<T> scale(VarT<T> a, T k) {
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * k;
  return make_op<T>(std::move(out), {a}, [a, k](NodeT<T>& self) {
    a->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * k;
  });
}

template <class T>
VarT<T> add_scalar(VarT<T> a, T k) {
  TensorT<T> out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + k;
  return make_op<T>(std::move(out), {a}, [a](NodeT<T>& self) {
    a->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
  });
}

// ---- reductions --------------------------------------------------------------

template <class T>
VarT<T> sum_all(VarT<T> a) {
  T total = T(0);
  for (std::int64_t i = 0; i < a->value.size(); ++i) total += a->value[i];
  TensorT<T> out(Shape{1});
  out[0] = total;
  return make_op<T>(std::move(out), {a}, [a](NodeT<T>& self) {
    a->ensure_grad();
    const T g = self.grad[0];
    for (std::int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

template <class T>
VarT<T> mean_all(VarT<T> a) {
  const T inv = T(1) / static_cast<T>(a->value.size());
  T total = T(0);
  for (std::int64_t i = 0; i < a->value.size(); ++i) total += a->value[i];
  TensorT<T> out(Shape{1});
  out[0] = total * inv;
  return make_op<T>(std::move(out), {a}, [a, inv](NodeT<T>& self) {
    a->ensure_grad();
    const T g = self.grad[0] * inv;
    for (std::int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

template <class T>
T scalar_value(const VarT<T>& v) {
  require(v->value.size() == 1, "scalar_value on non-scalar node");
  return v->value[0];
}

}  // namespace osseg::ad
