#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mgpms/tensor/tensor.hpp"

namespace mgpms {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Worst error per input tensor, in input order.
  std::vector<double> per_input;
};

/// Compares backward() against central differences of a scalar function.
/// Relative error per coordinate is
///   |analytic - central| / max(|analytic|, |central|, floor).
/// A floor near the finite-difference noise level keeps coordinates whose
/// gradient is exactly zero from reading as rounding noise over nothing.
GradCheckReport grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           const std::vector<Tensor>& at, double eps, double floor = 1e-12);

/// Single-input form; returns the maximum relative error.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, double eps);

}  // namespace mgpms
