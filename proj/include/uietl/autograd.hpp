#pragma once

#include <deque>
#include <functional>
#include <utility>

#include "uietl/tensor.hpp"

namespace uietl {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::function<void()> backward;

  // Gradient buffer, zero-initialised on first use.
  Tensor<T>& g() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const noexcept { return !grad.empty(); }
};

template <class T>
using Var = Node<T>*;

/// Tape of operations recorded in creation order. Backward walks the tape in
/// reverse, which is a valid topological order because every node is created
/// after its inputs. With recording off, ops compute values only.
template <class T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return recording_; }

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, {}); }
  Var<T> variable(Tensor<T> v) { return push(std::move(v), recording_, {}); }

  template <class... Inputs>
  bool needs_grad(Inputs... in) const noexcept {
    return recording_ && ((in != nullptr && in->requires_grad) || ...);
  }

  Var<T> record(Tensor<T> v, bool requires_grad, std::function<void()> backward) {
    return push(std::move(v), requires_grad, requires_grad ? std::move(backward) : nullptr);
  }

  void backward(Var<T> out, const Tensor<T>& seed) {
    if (seed.shape() != out->value.shape()) throw ShapeError("backward seed shape mismatch");
    auto& g = out->g();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->requires_grad && it->backward && it->has_grad()) it->backward();
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  Var<T> push(Tensor<T> v, bool req, std::function<void()> bw) {
    auto& n = nodes_.emplace_back();
    n.value = std::move(v);
    n.requires_grad = req;
    n.backward = std::move(bw);
    return &n;
  }

  bool recording_;
  std::deque<Node<T>> nodes_;
};

}  // namespace uietl
