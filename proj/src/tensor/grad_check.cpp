#include "mgpms/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mgpms {

GradCheckReport grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           const std::vector<Tensor>& at, double eps, double floor) {
  std::vector<Tensor> leaves;
  leaves.reserve(at.size());
  for (const auto& t : at) leaves.push_back(Tensor::parameter(t.shape(), t.to_vector()));
  f(leaves).backward();

  GradCheckReport report;
  report.per_input.assign(at.size(), 0.0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    const auto analytic = leaves[i].grad();
    for (std::size_t c = 0; c < at[i].size(); ++c) {
      auto evaluate = [&](double delta) {
        std::vector<Tensor> probe;
        for (std::size_t j = 0; j < at.size(); ++j) {
          if (j != i) {
            probe.push_back(Tensor::constant(at[j].shape(), at[j].to_vector()));
            continue;
          }
          auto v = at[j].to_vector();
          v[c] += delta;
          probe.push_back(Tensor::constant(at[j].shape(), std::move(v)));
        }
        return f(probe).item();
      };
      const double central = (evaluate(eps) - evaluate(-eps)) / (2.0 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[c];
      const double denom = std::max({std::abs(a), std::abs(central), floor});
      const double err = std::abs(a - central) / denom;
      report.per_input[i] = std::max(report.per_input[i], err);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = i;
        report.worst_index = c;
        report.analytic = a;
        report.numeric = central;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, double eps) {
  return grad_check([&](std::span<const Tensor> in) { return f(in[0]); }, {at}, eps).max_rel_error;
}

}  // namespace mgpms
