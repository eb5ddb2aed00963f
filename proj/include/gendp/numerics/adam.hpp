#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gendp/error.hpp"
#include "gendp/numerics/tensor.hpp"

namespace gendp {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Classic L2: wd * w is added to the raw gradient before the moment updates.
  double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

// One bias-corrected Adam update over `params` using their accumulated
// Tensor::grad (an empty grad counts as zero). Nothing is modified when any
// gradient is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i]->size(), T(0));
      state.second_moment[i].assign(params[i]->size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    if (state.first_moment[i].size() != p.size()) {
      throw ShapeError("adam_step: moment size mismatch for tensor " + std::to_string(i));
    }
    if (!p.grad.empty() && p.grad.size() != p.size()) {
      throw ShapeError("adam_step: gradient size mismatch for tensor " + std::to_string(i));
    }
    for (auto g : p.grad) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient, update aborted");
    }
  }

  const auto& o = state.options;
  state.step += 1;
  const T b1 = static_cast<T>(o.beta1);
  const T b2 = static_cast<T>(o.beta2);
  const T lr = static_cast<T>(o.learning_rate);
  const T eps = static_cast<T>(o.epsilon);
  const T wd = static_cast<T>(o.weight_decay);
  const T c1 = static_cast<T>(1.0 - std::pow(o.beta1, static_cast<double>(state.step)));
  const T c2 = static_cast<T>(1.0 - std::pow(o.beta2, static_cast<double>(state.step)));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = !p.grad.empty();
    for (std::size_t k = 0; k < p.size(); ++k) {
      T g = has_grad ? p.grad[k] : T(0);
      g += wd * p.data[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const T mhat = m[k] / c1;
      const T vhat = v[k] / c2;
      p.data[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, AdamOptions options) : params_(std::move(params)) {
    state_.options = options;
  }

  void step() { adam_step<T>(params_, state_); }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  const std::vector<Tensor<T>*>& params() const { return params_; }
  AdamState<T>& state() { return state_; }
  const AdamState<T>& state() const { return state_; }

 private:
  std::vector<Tensor<T>*> params_;
  AdamState<T> state_;
};

}  // namespace gendp
