#pragma once

#include <variant>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"

namespace diffcon {

/// r(x) = a^T x
struct LinearReward {
  Vec a;
};

/// r(x) = -kappa ||x||^2 / 2
struct QuadraticReward {
  double kappa = 0.0;
};

/// Diagonal Gaussian prior tilted by exp(r / tau).
struct GaussTiltSpec {
  Vec mean;
  Vec var;
  std::variant<LinearReward, QuadraticReward> reward;
  double tau = 1.0;
};

struct DiagGaussian {
  Vec mean;
  Vec var;
};

/// Mean and variance of the density proportional to N(x | m, s2) exp(r(x) / tau).
inline DiagGaussian gauss_tilt(const GaussTiltSpec& spec) {
  if (spec.mean.size() != spec.var.size()) throw ShapeError("gauss_tilt: mean/variance length mismatch");
  if (!(spec.tau > 0.0)) throw DomainError("gauss_tilt: tau must be positive");
  for (double v : spec.var)
    if (!(v > 0.0)) throw DomainError("gauss_tilt: variances must be positive");
  DiagGaussian out{spec.mean, spec.var};
  if (const auto* lin = std::get_if<LinearReward>(&spec.reward)) {
    if (lin->a.size() != spec.mean.size()) throw ShapeError("gauss_tilt: reward direction length mismatch");
    for (std::size_t i = 0; i < out.mean.size(); ++i) out.mean[i] += spec.var[i] * lin->a[i] / spec.tau;
    return out;
  }
  const double kappa = std::get<QuadraticReward>(spec.reward).kappa;
  for (std::size_t i = 0; i < out.mean.size(); ++i) {
    const double shrink = 1.0 + spec.var[i] * kappa / spec.tau;
    if (!(shrink > 0.0)) throw DomainError("gauss_tilt: tilted density is not normalizable");
    out.var[i] = spec.var[i] / shrink;
    out.mean[i] = spec.mean[i] / shrink;
  }
  return out;
}

}  // namespace diffcon
