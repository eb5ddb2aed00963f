#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gendp/error.hpp"
#include "gendp/numerics/tape.hpp"

namespace gendp {

// Floor applied to probabilities before taking the log in cross_entropy.
inline constexpr double kProbFloor = 1e-12;

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using MVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape != b.tape) throw Error("operands recorded on different tapes");
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank1(const char* op, const Var<T>& a) {
  if (a.shape().size() != 1) {
    throw ShapeError(std::string(op) + ": expected a vector, got " + shape_str(a.shape()));
  }
}

template <typename T>
void require_finite(const char* op, std::span<const T> v) {
  for (auto x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

// Elementwise op with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx) {
  auto x = a.value();
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id;
  return a.tape->record(a.shape(), std::move(y), {ia}, [ia, dfdx](Tape<T>& t, std::size_t self) {
    T* ga = t.grad_buffer(ia);
    if (!ga) return;
    auto g = t.grad(self);
    auto xv = t.value(ia);
    auto yv = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace detail

// (m×k)·(k×n) -> m×n, (m×k)·(k) -> m, (k)·(k×n) -> n.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.empty() || sa.size() > 2 || sb.size() > 2 ||
      (sa.size() == 1 && sb.size() == 1)) {
    throw ShapeError("matmul: unsupported operand ranks " + shape_str(sa) + " · " + shape_str(sb));
  }
  const std::size_t m = sa.size() == 2 ? sa[0] : 1;
  const std::size_t k = sa.size() == 2 ? sa[1] : sa[0];
  const std::size_t kb = sb[0];
  const std::size_t n = sb.size() == 2 ? sb[1] : 1;
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(sa) + " · " + shape_str(sb));
  }
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) out_shape = {m, n};
  else if (sa.size() == 2) out_shape = {m};
  else out_shape = {n};

  std::vector<T> out(m * n);
  detail::MMap<T>(out.data(), m, n).noalias() =
      detail::CMap<T>(a.value().data(), m, k) * detail::CMap<T>(b.value().data(), k, n);

  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out_shape), std::move(out), {ia, ib},
                        [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
                          detail::CMap<T> g(t.grad(self).data(), m, n);
                          if (T* ga = t.grad_buffer(ia)) {
                            detail::MMap<T>(ga, m, k).noalias() +=
                                g * detail::CMap<T>(t.value(ib).data(), k, n).transpose();
                          }
                          if (T* gb = t.grad_buffer(ib)) {
                            detail::MMap<T>(gb, k, n).noalias() +=
                                detail::CMap<T>(t.value(ia).data(), m, k).transpose() * g;
                          }
                        });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape("add", a, b);
  auto x = a.value();
  auto y = b.value();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self);
    if (T* ga = t.grad_buffer(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = t.grad_buffer(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape("sub", a, b);
  auto x = a.value();
  auto y = b.value();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self);
    if (T* ga = t.grad_buffer(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = t.grad_buffer(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

// Hadamard product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape("mul", a, b);
  auto x = a.value();
  auto y = b.value();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self);
    if (T* ga = t.grad_buffer(ia)) {
      auto yv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
    }
    if (T* gb = t.grad_buffer(ib)) {
      auto xv = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  return detail::unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

// M[n×d] + v[d] broadcast over rows.
template <typename T>
Var<T> add_rowwise(Var<T> m, Var<T> v) {
  detail::require_same_tape(m, v);
  const Shape& sm = m.shape();
  if (sm.size() != 2 || v.shape().size() != 1 || v.shape()[0] != sm[1]) {
    throw ShapeError("add_rowwise: " + shape_str(sm) + " + " + shape_str(v.shape()));
  }
  const std::size_t rows = sm[0], cols = sm[1];
  auto x = m.value();
  auto y = v.value();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + y[c];
  const std::size_t im = m.id, iv = v.id;
  return m.tape->record(sm, std::move(out), {im, iv}, [im, iv, rows, cols](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self);
    if (T* gm = t.grad_buffer(im))
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    if (T* gv = t.grad_buffer(iv))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gv[c] += g[r * cols + c];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return detail::unary(a, [](T x) { return detail::stable_sigmoid(x); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  for (auto x : a.value()) {
    if (!(x > T(0))) throw NumericError("log: non-positive or NaN input");
  }
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// Max-subtracted softmax over a vector.
template <typename T>
Var<T> softmax(Var<T> a) {
  detail::require_rank1("softmax", a);
  auto x = a.value();
  detail::require_finite<T>("softmax", x);
  T mx = *std::max_element(x.begin(), x.end());
  std::vector<T> y(x.size());
  T total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  for (auto& v : y) v /= total;
  const std::size_t ia = a.id;
  return a.tape->record(a.shape(), std::move(y), {ia}, [ia](Tape<T>& t, std::size_t self) {
    T* ga = t.grad_buffer(ia);
    if (!ga) return;
    auto g = t.grad(self);
    auto yv = t.value(self);
    T dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += yv[i] * (g[i] - dot);
  });
}

// -log(max(dist[target], 1e-12)) as a scalar.
template <typename T>
Var<T> cross_entropy(Var<T> dist, std::size_t target) {
  detail::require_rank1("cross_entropy", dist);
  auto p = dist.value();
  if (target >= p.size()) {
    throw VocabError("cross_entropy: target " + std::to_string(target) + " outside distribution of size " +
                     std::to_string(p.size()));
  }
  if (std::isnan(p[target])) throw NumericError("cross_entropy: NaN probability");
  const T floor = static_cast<T>(kProbFloor);
  const T pt = std::max(p[target], floor);
  const std::size_t id = dist.id;
  return dist.tape->record({1}, {-std::log(pt)}, {id}, [id, target, floor](Tape<T>& t, std::size_t self) {
    T* gd = t.grad_buffer(id);
    if (!gd) return;
    T pv = t.value(id)[target];
    if (pv > floor) gd[target] -= t.grad(self)[0] / pv;
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  auto x = a.value();
  T total = 0;
  for (auto v : x) total += v;
  const std::size_t ia = a.id;
  return a.tape->record({1}, {total}, {ia}, [ia](Tape<T>& t, std::size_t self) {
    T* ga = t.grad_buffer(ia);
    if (!ga) return;
    T g = t.grad(self)[0];
    for (std::size_t i = 0; i < t.value(ia).size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> dot(Var<T> a, Var<T> b) {
  return sum(mul(a, b));
}

// Single element as a scalar.
template <typename T>
Var<T> pick(Var<T> a, std::size_t index) {
  if (index >= a.size()) throw ShapeError("pick: index out of range");
  const std::size_t ia = a.id;
  return a.tape->record({1}, {a.value()[index]}, {ia}, [ia, index](Tape<T>& t, std::size_t self) {
    if (T* ga = t.grad_buffer(ia)) ga[index] += t.grad(self)[0];
  });
}

// Flattened concatenation into one vector.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<T> out;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    detail::require_same_tape(parts.front(), p);
    offsets.push_back(out.size());
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id);
  }
  Shape shape{out.size()};
  return parts.front().tape->record(std::move(shape), std::move(out), ids,
                                    [ids, offsets](Tape<T>& t, std::size_t self) {
                                      auto g = t.grad(self);
                                      for (std::size_t k = 0; k < ids.size(); ++k) {
                                        T* gp = t.grad_buffer(ids[k]);
                                        if (!gp) continue;
                                        std::size_t n = t.value(ids[k]).size();
                                        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offsets[k] + i];
                                      }
                                    });
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t offset, std::size_t length) {
  detail::require_rank1("slice", a);
  if (length == 0 || offset + length > a.size()) {
    throw ShapeError("slice: [" + std::to_string(offset) + ", +" + std::to_string(length) +
                     ") outside " + shape_str(a.shape()));
  }
  auto x = a.value();
  std::vector<T> out(x.begin() + offset, x.begin() + offset + length);
  const std::size_t ia = a.id;
  return a.tape->record({length}, std::move(out), {ia}, [ia, offset](Tape<T>& t, std::size_t self) {
    T* ga = t.grad_buffer(ia);
    if (!ga) return;
    auto g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

// Row `index` of a matrix. Also serves as embedding lookup.
template <typename T>
Var<T> row(Var<T> m, std::size_t index) {
  const Shape& s = m.shape();
  if (s.size() != 2) throw ShapeError("row: expected a matrix, got " + shape_str(s));
  if (index >= s[0]) {
    throw VocabError("row index " + std::to_string(index) + " out of range for " + shape_str(s));
  }
  const std::size_t cols = s[1];
  auto x = m.value();
  std::vector<T> out(x.begin() + index * cols, x.begin() + (index + 1) * cols);
  const std::size_t im = m.id;
  return m.tape->record({cols}, std::move(out), {im}, [im, index, cols](Tape<T>& t, std::size_t self) {
    T* gm = t.grad_buffer(im);
    if (!gm) return;
    auto g = t.grad(self);
    for (std::size_t c = 0; c < cols; ++c) gm[index * cols + c] += g[c];
  });
}

template <typename T>
Var<T> embedding_lookup(Var<T> table, std::size_t index) {
  return row(table, index);
}

// Gathers rows into an n×d matrix (one GEMM-ready input per sequence).
template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<std::size_t>& indices) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw ShapeError("gather_rows: expected a matrix, got " + shape_str(s));
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  const std::size_t cols = s[1];
  auto x = table.value();
  std::vector<T> out;
  out.reserve(indices.size() * cols);
  for (auto idx : indices) {
    if (idx >= s[0]) {
      throw VocabError("token id " + std::to_string(idx) + " out of range for vocabulary of size " +
                       std::to_string(s[0]));
    }
    out.insert(out.end(), x.begin() + idx * cols, x.begin() + (idx + 1) * cols);
  }
  const std::size_t it = table.id;
  return table.tape->record({indices.size(), cols}, std::move(out), {it},
                            [it, indices, cols](Tape<T>& t, std::size_t self) {
                              T* gt = t.grad_buffer(it);
                              if (!gt) return;
                              auto g = t.grad(self);
                              for (std::size_t r = 0; r < indices.size(); ++r)
                                for (std::size_t c = 0; c < cols; ++c) gt[indices[r] * cols + c] += g[r * cols + c];
                            });
}

// Stacks equal-length vectors as rows of a matrix.
template <typename T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t cols = rows.front().size();
  std::vector<T> out;
  out.reserve(rows.size() * cols);
  std::vector<std::size_t> ids;
  for (const auto& r : rows) {
    detail::require_same_tape(rows.front(), r);
    if (r.shape().size() != 1 || r.size() != cols) {
      throw ShapeError("stack_rows: row shape " + shape_str(r.shape()) + " differs from [" +
                       std::to_string(cols) + "]");
    }
    auto v = r.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(r.id);
  }
  return rows.front().tape->record({rows.size(), cols}, std::move(out), ids,
                                   [ids, cols](Tape<T>& t, std::size_t self) {
                                     auto g = t.grad(self);
                                     for (std::size_t r = 0; r < ids.size(); ++r) {
                                       T* gr = t.grad_buffer(ids[r]);
                                       if (!gr) continue;
                                       for (std::size_t c = 0; c < cols; ++c) gr[c] += g[r * cols + c];
                                     }
                                   });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

}  // namespace gendp
