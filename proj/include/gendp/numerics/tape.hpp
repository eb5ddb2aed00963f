#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gendp/error.hpp"
#include "gendp/numerics/tensor.hpp"

namespace gendp {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives
// and has not been cleared.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const { return tape->shape(id); }
  std::span<const T> value() const { return tape->value(id); }
  std::size_t size() const { return tape->value(id).size(); }
  T item() const {
    auto v = value();
    if (v.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return v[0];
  }
  T operator[](std::size_t i) const { return value()[i]; }
  bool needs_grad() const { return tape->needs_grad(id); }
};

// Records primitive applications in execution order. Backward walks them in
// reverse; each node is visited once. Parameter leaves reference the caller's
// Tensor storage and flush their gradient into Tensor::grad at the end of
// every backward pass, so repeated passes accumulate.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    param_leaf_.clear();
  }

  Var<T> constant(Shape shape, std::vector<T> values) {
    if (values.size() != shape_size(shape)) {
      throw ShapeError("constant data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    Node n;
    n.shape = std::move(shape);
    n.owned = std::move(values);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(const Tensor<T>& t) { return constant(t.shape, t.data); }

  // Leaf bound to externally owned storage. Gradients are tracked only when
  // the tensor requires them and the tape was built with grad enabled.
  Var<T> param(Tensor<T>& p) {
    auto it = param_leaf_.find(&p);
    if (it != param_leaf_.end()) return {this, it->second};
    Node n;
    n.shape = p.shape;
    n.ext = p.data.data();
    n.ext_size = p.data.size();
    n.needs_grad = grad_enabled_ && p.requires_grad;
    n.param = n.needs_grad ? &p : nullptr;
    nodes_.push_back(std::move(n));
    param_leaf_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  Var<T> param(const Tensor<T>& p) {
    auto it = param_leaf_.find(&p);
    if (it != param_leaf_.end()) return {this, it->second};
    Node n;
    n.shape = p.shape;
    n.ext = p.data.data();
    n.ext_size = p.data.size();
    nodes_.push_back(std::move(n));
    param_leaf_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  // Appends an op result. `fn` is kept only if some input needs a gradient.
  Var<T> record(Shape shape, std::vector<T> values, std::initializer_list<std::size_t> inputs,
                BackwardFn fn) {
    return record(std::move(shape), std::move(values), std::vector<std::size_t>(inputs),
                  std::move(fn));
  }

  Var<T> record(Shape shape, std::vector<T> values, const std::vector<std::size_t>& inputs,
                BackwardFn fn) {
    Node n;
    n.shape = std::move(shape);
    n.owned = std::move(values);
    if (grad_enabled_) {
      for (auto i : inputs) {
        if (nodes_[i].needs_grad) {
          n.needs_grad = true;
          break;
        }
      }
      if (n.needs_grad) n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }

  std::span<const T> value(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.ext) return {n.ext, n.ext_size};
    return {n.owned.data(), n.owned.size()};
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node, zero-initialized on first access. Returns
  // nullptr for nodes that do not take part in differentiation.
  T* grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(value(id).size(), T(0));
    return n.grad.data();
  }

  std::span<const T> grad(std::size_t id) const { return nodes_[id].grad; }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw Error("backward: loss belongs to a different tape");
    if (value(loss.id).size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(shape(loss.id)));
    }
    for (auto& n : nodes_) n.grad.clear();
    T* seed = grad_buffer(loss.id);
    if (!seed) return;
    seed[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
    for (auto& n : nodes_) {
      if (!n.param || n.grad.empty()) continue;
      auto& g = n.param->grad;
      if (g.empty()) g.assign(n.grad.size(), T(0));
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }

 private:
  struct Node {
    Shape shape;
    std::vector<T> owned;
    const T* ext = nullptr;
    std::size_t ext_size = 0;
    Tensor<T>* param = nullptr;
    std::vector<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const void*, std::size_t> param_leaf_;
};

}  // namespace gendp
