#pragma once

#include <string>
#include <vector>

#include "gendp/numerics/checkpoint.hpp"
#include "gendp/numerics/ops.hpp"

namespace gendp {

// Additive attention energy e_j = v · tanh(s·Wq + h_j·Wk + b).
template <typename T>
struct AttentionParams {
  Tensor<T> w_query;  // [Dq x A]
  Tensor<T> w_key;    // [Dk x A]
  Tensor<T> bias;     // [A]
  Tensor<T> v;        // [A]

  AttentionParams() = default;
  AttentionParams(std::size_t query_size, std::size_t key_size, std::size_t attn_size)
      : w_query({query_size, attn_size}, T(0), true),
        w_key({key_size, attn_size}, T(0), true),
        bias({attn_size}, T(0), true),
        v({attn_size}, T(0), true) {}

  void append_named(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
    out.push_back({prefix + ".w_query", &w_query});
    out.push_back({prefix + ".w_key", &w_key});
    out.push_back({prefix + ".bias", &bias});
    out.push_back({prefix + ".v", &v});
  }
};

// Keys with their query-independent projection, computed once per sequence.
template <typename T>
struct AttentionKeys {
  Var<T> keys;       // [n x Dk]
  Var<T> projected;  // [n x A]
  std::size_t count = 0;
};

template <typename T>
struct AttentionResult {
  Var<T> context;  // [Dk]
  Var<T> weights;  // [n], non-negative, sums to 1
};

template <typename T>
AttentionKeys<T> prepare_keys(Var<T> keys, AttentionParams<T>& p) {
  if (keys.shape().size() != 2) throw ShapeError("attention keys must be a matrix, got " + shape_str(keys.shape()));
  return {keys, matmul(keys, keys.tape->param(p.w_key)), keys.shape()[0]};
}

template <typename T>
AttentionKeys<T> prepare_keys(const std::vector<Var<T>>& keys, AttentionParams<T>& p) {
  if (keys.empty()) throw Error("attend: empty key sequence");
  return prepare_keys(stack_rows(keys), p);
}

// α = softmax(energies); context = Σ α_j keys[j].
template <typename T>
AttentionResult<T> attend_energies(Var<T> energies, Var<T> keys) {
  auto alpha = softmax(energies);
  return {matmul(alpha, keys), alpha};
}

template <typename T>
AttentionResult<T> attend(Var<T> query, const AttentionKeys<T>& keys, AttentionParams<T>& p) {
  Tape<T>& t = *query.tape;
  auto q = matmul(query, t.param(p.w_query)) + t.param(p.bias);
  auto hidden = tanh(add_rowwise(keys.projected, q));
  return attend_energies(matmul(hidden, t.param(p.v)), keys.keys);
}

template <typename T>
AttentionResult<T> attend(Var<T> query, const std::vector<Var<T>>& keys, AttentionParams<T>& p) {
  return attend(query, prepare_keys(keys, p), p);
}

}  // namespace gendp
