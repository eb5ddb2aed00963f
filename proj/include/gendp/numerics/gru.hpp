#pragma once

#include <string>
#include <vector>

#include "gendp/numerics/checkpoint.hpp"
#include "gendp/numerics/ops.hpp"

namespace gendp {

// GRU weights. Column blocks of the 3H-wide projections are ordered
// [update z | reset r | candidate]:
//   z = σ(x·Wz + h·Uz + bz)
//   r = σ(x·Wr + h·Ur + br)
//   h̃ = tanh(x·Wc + (r ⊙ h)·Uc + bc)
//   h' = (1 - z) ⊙ h + z ⊙ h̃
template <typename T>
struct GruParams {
  Tensor<T> w_input;      // [D x 3H]
  Tensor<T> w_gates;      // [H x 2H], recurrent weights for z and r
  Tensor<T> w_candidate;  // [H x H]
  Tensor<T> bias;         // [3H]

  GruParams() = default;
  GruParams(std::size_t input_size, std::size_t hidden_size)
      : w_input({input_size, 3 * hidden_size}, T(0), true),
        w_gates({hidden_size, 2 * hidden_size}, T(0), true),
        w_candidate({hidden_size, hidden_size}, T(0), true),
        bias({3 * hidden_size}, T(0), true) {}

  std::size_t input_size() const { return w_input.shape[0]; }
  std::size_t hidden_size() const { return w_candidate.shape[0]; }

  void append_named(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
    out.push_back({prefix + ".w_input", &w_input});
    out.push_back({prefix + ".w_gates", &w_gates});
    out.push_back({prefix + ".w_candidate", &w_candidate});
    out.push_back({prefix + ".bias", &bias});
  }
};

// Recurrence given the already-projected input x·W + b (length 3H).
template <typename T>
Var<T> gru_step(Var<T> projected_input, Var<T> h, GruParams<T>& p) {
  const std::size_t hs = p.hidden_size();
  if (projected_input.shape() != Shape{3 * hs} || h.shape() != Shape{hs}) {
    throw ShapeError("gru: projected input " + shape_str(projected_input.shape()) + " / hidden " +
                     shape_str(h.shape()) + " do not fit hidden size " + std::to_string(hs));
  }
  Tape<T>& tape = *h.tape;
  auto recurrent = matmul(h, tape.param(p.w_gates));
  auto z = sigmoid(slice(projected_input, 0, hs) + slice(recurrent, 0, hs));
  auto r = sigmoid(slice(projected_input, hs, hs) + slice(recurrent, hs, hs));
  auto candidate = tanh(slice(projected_input, 2 * hs, hs) + matmul(r * h, tape.param(p.w_candidate)));
  return h + z * (candidate - h);
}

template <typename T>
Var<T> gru_cell(Var<T> x, Var<T> h, GruParams<T>& p) {
  if (x.shape() != Shape{p.input_size()}) {
    throw ShapeError("gru: input " + shape_str(x.shape()) + " does not fit input size " +
                     std::to_string(p.input_size()));
  }
  Tape<T>& tape = *x.tape;
  auto projected = matmul(x, tape.param(p.w_input)) + tape.param(p.bias);
  return gru_step(projected, h, p);
}

}  // namespace gendp
