#pragma once

// Central-difference gradient checking against a registry of parameters.
// The loss closure must be a pure function of the current parameter values
// (fixed inputs, fixed dropout streams).

#include <cmath>
#include <functional>
#include <string>

#include "codemix/nn/tensor.hpp"

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
  size_t checked = 0;
};

// compute_loss_and_grads: zero grads, forward+backward, return loss.
// compute_loss: forward only, must not touch grads.
inline GradCheckResult finite_difference_check(codemix::nn::ParamRegistry& params,
                                               const std::function<double()>& compute_loss_and_grads,
                                               const std::function<double()>& compute_loss,
                                               double h = 1e-5) {
  params.zero_grads();
  compute_loss_and_grads();

  std::vector<std::vector<double>> analytic;
  for (const codemix::nn::Param* p : params.items()) analytic.push_back(p->grad.data);

  GradCheckResult result;
  for (size_t pi = 0; pi < params.items().size(); ++pi) {
    codemix::nn::Param* p = params.items()[pi];
    for (size_t i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + h;
      const double loss_plus = compute_loss();
      p->value.data[i] = saved - h;
      const double loss_minus = compute_loss();
      p->value.data[i] = saved;

      const double numeric = (loss_plus - loss_minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double abs_err = std::fabs(a - numeric);
      const double denom = std::max(std::fabs(a), std::fabs(numeric));
      // Below the noise floor of central differences, compare absolutely.
      const double rel = denom >= 1e-5 ? abs_err / denom : (abs_err < 1e-9 ? 0.0 : 1.0);
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
      result.max_abs_err = std::max(result.max_abs_err, abs_err);
      ++result.checked;
    }
  }
  return result;
}
