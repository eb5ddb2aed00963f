#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gendp/error.hpp"

namespace gendp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major array. `grad` is allocated lazily by the tape and persists
// across backward passes until zero_grad().
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;

  Tensor() = default;

  explicit Tensor(Shape s, T fill = T(0), bool needs_grad = false)
      : shape(std::move(s)), data(shape_size(shape), fill), requires_grad(needs_grad) {
    validate_shape();
  }

  Tensor(Shape s, std::vector<T> values, bool needs_grad = false)
      : shape(std::move(s)), data(std::move(values)), requires_grad(needs_grad) {
    validate_shape();
    if (data.size() != shape_size(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad.clear(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    out.requires_grad = requires_grad;
    return out;
  }

 private:
  void validate_shape() const {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
  }
};

}  // namespace gendp
