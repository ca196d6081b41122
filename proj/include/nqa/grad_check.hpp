// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NQA_GRAD_CHECK_HPP
#define NQA_GRAD_CHECK_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "nqa/tensor.hpp"

namespace nqa {

struct GradCheckReport {
  double max_error = 0.0;  // max |analytic - central| / max(1, |analytic|)
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of a scalar-valued f against central
// differences with step eps. When max_coords_per_input > 0, that many
// coordinates per input are drawn (seeded) instead of checking all of them.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                           double eps, std::size_t max_coords_per_input = 0,
                           std::uint64_t seed = 0);

// Single-input convenience form; returns the max relative error.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace nqa

#endif  // NQA_GRAD_CHECK_HPP
