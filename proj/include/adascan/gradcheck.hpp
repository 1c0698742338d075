#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "adascan/tensor.hpp"

namespace adascan {

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_block = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<double> block_max_rel_error;
};

// Central-difference check of an analytic gradient. Perturbs every
// coordinate by +/-step; relative error uses max(|analytic|, |numeric|, 1e-8)
// as the denominator. loss must be deterministic.
template <class LossFn, class GradFn>
FiniteDiffReport finite_diff_check(LossFn&& loss, GradFn&& analytic,
                                   std::vector<Tensor> params, double step) {
  require(step > 0.0, "finite_diff_check: step must be positive");
  const std::vector<Tensor> grads = analytic(params);
  require(grads.size() == params.size(), "finite_diff_check: gradient block count mismatch");

  FiniteDiffReport report;
  report.block_max_rel_error.assign(params.size(), 0.0);
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(grads[b].shape() == params[b].shape(), "finite_diff_check: block shape mismatch");
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double saved = params[b][i];
      params[b][i] = saved + step;
      const double f_plus = loss(params);
      params[b][i] = saved - step;
      const double f_minus = loss(params);
      params[b][i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double analytic_g = grads[b][i];
      const double denom = std::max({std::fabs(analytic_g), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic_g - numeric) / denom;
      report.block_max_rel_error[b] = std::max(report.block_max_rel_error[b], rel);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_block = b;
        report.worst_coord = i;
        report.worst_analytic = analytic_g;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace adascan
