// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nqa {

namespace {

std::vector<Tensor> as_leaves(const std::vector<Tensor>& inputs, bool requires_grad) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    leaves.emplace_back(t.shape(), std::vector<real_t>(t.values().begin(), t.values().end()),
                        requires_grad);
  }
  return leaves;
}

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& inputs) {
  const double value = f(inputs).item();
  if (!std::isfinite(value)) throw NonFiniteError("grad_check: non-finite function value");
  return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                           double eps, std::size_t max_coords_per_input, std::uint64_t seed) {
  if (!(eps > 0.0)) throw TensorError("grad_check: eps must be positive");

  std::vector<Tensor> leaves = as_leaves(inputs, true);
  f(leaves).backward();

  GradCheckReport report;
  std::mt19937_64 rng(seed);
  std::vector<Tensor> probe = as_leaves(inputs, false);

  for (std::size_t input = 0; input < leaves.size(); ++input) {
    const std::size_t n = leaves[input].numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_input > 0 && max_coords_per_input < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_input);
    }
    const auto grad = leaves[input].grad();
    std::vector<real_t> values(leaves[input].values().begin(), leaves[input].values().end());

    for (std::size_t index : coords) {
      const real_t original = values[index];
      const real_t plus = real_t(double(original) + eps);
      const real_t minus = real_t(double(original) - eps);

      values[index] = plus;
      probe[input] = Tensor(leaves[input].shape(), values);
      const double f_plus = evaluate(f, probe);
      values[index] = minus;
      probe[input] = Tensor(leaves[input].shape(), values);
      const double f_minus = evaluate(f, probe);
      values[index] = original;
      probe[input] = Tensor(leaves[input].shape(), values);

      // Divide by the step actually representable after rounding.
      const double numeric = (f_plus - f_minus) / (double(plus) - double(minus));
      const double analytic = grad.empty() ? 0.0 : double(grad[index]);
      const double error = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      if (report.coordinates_checked++ == 0 || error > report.max_error) {
        report.max_error = error;
        report.worst_input = input;
        report.worst_index = index;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  return grad_check([&f](const std::vector<Tensor>& in) { return f(in[0]); },
                    std::vector<Tensor>{x}, eps)
      .max_error;
}

}  // namespace nqa
