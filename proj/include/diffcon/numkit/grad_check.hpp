#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"

namespace diffcon {

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;
};

using DifferentiableLoss = std::function<LossAndGrad(std::span<const double>)>;

/// max_i |g_i - fd_i| / (|g_i| + 1e-8), where g is the analytic gradient at
/// `params` and fd the central difference with step h.
inline double grad_check(const DifferentiableLoss& fn, std::span<const double> params, double h = 1e-5) {
  const LossAndGrad at = fn(params);
  if (!std::isfinite(at.loss)) throw NumericError("grad_check: non-finite loss at base point");
  if (at.grad.size() != params.size()) throw ShapeError("grad_check: gradient length mismatch");
  Vec p(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = fn(p).loss;
    p[i] = saved - h;
    const double down = fn(p).loss;
    p[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: non-finite loss at perturbed coordinate " + std::to_string(i));
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(at.grad[i] - fd) / (std::abs(at.grad[i]) + 1e-8));
  }
  return worst;
}

}  // namespace diffcon
