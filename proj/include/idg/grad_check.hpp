// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "idg/tensor.hpp"

namespace idg {

// A differentiable scalar computation: value(params) plus analytic gradients
// with respect to each parameter tensor. f64 only; checks at f32 would drown
// in rounding noise.
struct Differentiable {
  std::function<double(const std::vector<Tensor<double>>&)> value;
  std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>&)>
      gradients;
};

// Max over all parameter entries of |analytic - central difference| /
// max(1, |analytic|). Throws if any evaluation goes non-finite, naming the
// parameter being perturbed.
inline double finite_diff_check(const Differentiable& f,
                                std::vector<Tensor<double>> params, double eps,
                                const std::vector<std::string>& names = {}) {
  if (!(eps >= 1e-7 && eps <= 1e-4))
    throw std::invalid_argument("finite_diff_check: eps outside [1e-7, 1e-4]");
  auto name_of = [&](std::size_t p) {
    return p < names.size() ? names[p] : ("param" + std::to_string(p));
  };
  std::vector<Tensor<double>> analytic = f.gradients(params);
  if (analytic.size() != params.size())
    throw std::invalid_argument("finite_diff_check: gradient count mismatch");
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!analytic[p].all_finite())
      throw std::runtime_error("finite_diff_check: non-finite gradient for " +
                               name_of(p));
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      double orig = params[p].data[i];
      params[p].data[i] = orig + eps;
      double fp = f.value(params);
      params[p].data[i] = orig - eps;
      double fm = f.value(params);
      params[p].data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error(
            "finite_diff_check: non-finite value while perturbing " +
            name_of(p));
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[p].data[i];
      double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace idg
