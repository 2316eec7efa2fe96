#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uietl/digest.hpp"
#include "uietl/error.hpp"
#include "uietl/autograd.hpp"
#include "uietl/tensor.hpp"

namespace uietl {

template <class T>
struct ParamEntry {
  std::vector<int> shape;
  std::vector<T> values;
  bool trainable = true;
};

/// Named parameter tensors with a per-entry trainable flag. Shapes are fixed at
/// insertion; optimizers only ever touch trainable entries.
template <class T>
class ParameterStore {
 public:
  using Map = std::map<std::string, ParamEntry<T>>;

  void add(const std::string& name, std::vector<int> shape, std::vector<T> values,
           bool trainable = true) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    if (Tensor<T>::count(shape) != values.size())
      throw ShapeError("parameter '" + name + "': shape " + shape_str(shape) + " holds " +
                       std::to_string(Tensor<T>::count(shape)) + " values, got " +
                       std::to_string(values.size()));
    entries_.emplace(name, ParamEntry<T>{std::move(shape), std::move(values), trainable});
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const ParamEntry<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  // Values may change; shapes may not.
  std::vector<T>& values(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    ++version_;
    return it->second.values;
  }

  Tensor<T> tensor(const std::string& name) const {
    const auto& e = at(name);
    Tensor<T> t(e.shape);
    std::copy(e.values.begin(), e.values.end(), t.ptr());
    return t;
  }

  const Map& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::uint64_t version() const noexcept { return version_; }
  void bump_version() noexcept { ++version_; }

  void set_trainable(bool trainable) {
    for (auto& [_, e] : entries_) e.trainable = trainable;
  }

  std::size_t scalar_count(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_)
      if (!trainable_only || e.trainable) n += e.values.size();
    return n;
  }

  /// SHA-256 over names, shapes, flags and raw value bytes in name order.
  std::string digest() const {
    Sha256 h;
    for (const auto& [name, e] : entries_) {
      h.update(name).update("\0", 1);
      for (int d : e.shape) h.update(&d, sizeof d);
      const char flag = e.trainable ? 1 : 0;
      h.update(&flag, 1);
      h.update(std::span<const T>(e.values));
    }
    return h.hex();
  }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, e] : entries_) {
      out.add(name, e.shape, std::vector<U>(e.values.begin(), e.values.end()), e.trainable);
    }
    return out;
  }

  bool operator==(const ParameterStore& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (const auto& [name, e] : entries_) {
      auto it = o.entries_.find(name);
      if (it == o.entries_.end() || it->second.shape != e.shape ||
          it->second.trainable != e.trainable || it->second.values != e.values)
        return false;
    }
    return true;
  }

 private:
  Map entries_;
  std::uint64_t version_ = 0;
};

/// Per-entry gradient buffers keyed like the store they belong to.
template <class T>
using GradientMap = std::map<std::string, std::vector<T>>;

template <class T>
GradientMap<T> zero_gradients(const ParameterStore<T>& store) {
  GradientMap<T> g;
  for (const auto& [name, e] : store.entries())
    if (e.trainable) g.emplace(name, std::vector<T>(e.values.size(), T(0)));
  return g;
}

template <class T>
void add_into(GradientMap<T>& dst, const GradientMap<T>& src, T scale = T(1)) {
  for (const auto& [name, g] : src) {
    auto& d = dst.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += scale * g[i];
  }
}

/// Exposes store entries as graph leaves and gathers their gradients after a
/// backward pass. Frozen entries become constants.
template <class T>
class ParamBinder {
 public:
  ParamBinder(Graph<T>& g, const ParameterStore<T>& store) : g_(g), store_(store) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& e = store_.at(name);
    Tensor<T> t = store_.tensor(name);
    Var<T> v = e.trainable ? g_.variable(std::move(t)) : g_.constant(std::move(t));
    bound_.emplace(name, v);
    return v;
  }

  void collect(GradientMap<T>& grads) const {
    for (const auto& [name, v] : bound_) {
      if (!v->has_grad()) continue;
      auto it = grads.find(name);
      if (it == grads.end()) continue;
      for (std::size_t i = 0; i < it->second.size(); ++i) it->second[i] += v->grad[i];
    }
  }

  Graph<T>& graph() noexcept { return g_; }

 private:
  Graph<T>& g_;
  const ParameterStore<T>& store_;
  std::map<std::string, Var<T>> bound_;
};

}  // namespace uietl
