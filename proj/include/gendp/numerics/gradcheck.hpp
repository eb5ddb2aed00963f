#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gendp/error.hpp"
#include "gendp/numerics/tape.hpp"

namespace gendp {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  // Check at most this many coordinates per tensor (evenly strided); 0 = all.
  std::size_t max_coords_per_tensor = 0;
};

// Compares tape gradients of `build_loss` against central differences
// (f(p+h) - f(p-h)) / 2h for every coordinate of `params`.
inline GradCheckResult finite_diff_check(const std::function<Var<double>(Tape<double>&)>& build_loss,
                                         const std::vector<Tensor<double>*>& params,
                                         GradCheckOptions opts = {}) {
  if (!(opts.step > 0.0)) throw Error("finite_diff_check: step must be positive");

  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto loss = build_loss(tape);
    if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: non-finite loss");
    tape.backward(loss);
  }

  auto eval = [&]() {
    Tape<double> tape(false);
    double v = build_loss(tape).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss");
    return v;
  };

  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = *params[t];
    const std::size_t n = p.size();
    std::size_t stride = 1;
    if (opts.max_coords_per_tensor > 0 && n > opts.max_coords_per_tensor) {
      stride = (n + opts.max_coords_per_tensor - 1) / opts.max_coords_per_tensor;
    }
    for (std::size_t k = 0; k < n; k += stride) {
      const double saved = p.data[k];
      p.data[k] = saved + opts.step;
      const double up = eval();
      p.data[k] = saved - opts.step;
      const double down = eval();
      p.data[k] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = p.grad.empty() ? 0.0 : p.grad[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > result.max_rel_error || (t == 0 && k == 0)) {
        result = {rel, t, k, analytic, numeric};
      }
    }
  }
  return result;
}

}  // namespace gendp
