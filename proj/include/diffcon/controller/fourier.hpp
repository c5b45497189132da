#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

/// Random frequencies omega_1..omega_M ~ N(0, I_d) for the real Fourier
/// decomposition of the Gaussian step kernel N(x | mu0, beta_tilde I).
struct FourierBasis {
  std::vector<Vec> omegas;
  double beta_tilde = 1.0;

  static FourierBasis sample(std::size_t dim, std::size_t count, double beta_tilde, Rng& rng) {
    if (count == 0) throw ConfigError("FourierBasis needs at least one frequency");
    if (!(beta_tilde > 0.0)) throw DomainError("FourierBasis: step variance must be positive");
    FourierBasis b;
    b.beta_tilde = beta_tilde;
    b.omegas.reserve(count);
    for (std::size_t i = 0; i < count; ++i) b.omegas.push_back(rng.normal_vector(dim));
    return b;
  }

  std::size_t dim() const { return omegas.empty() ? 0 : omegas.front().size(); }
};

/// (cos, sin)(omega^T mu0 / sqrt(beta_tilde))
inline std::array<double, 2> phi(std::span<const double> omega, std::span<const double> mu0, double beta_tilde) {
  if (!(beta_tilde > 0.0)) throw DomainError("phi: step variance must be positive");
  const double a = dot(omega, mu0) / std::sqrt(beta_tilde);
  return {std::cos(a), std::sin(a)};
}

/// (2 pi beta_tilde)^(-d/2) (cos, sin)(omega^T x / sqrt(beta_tilde))
inline std::array<double, 2> rho(std::span<const double> omega, std::span<const double> x_next, double beta_tilde,
                                 std::size_t d) {
  if (!(beta_tilde > 0.0)) throw DomainError("rho: step variance must be positive");
  const double norm = std::pow(2.0 * std::numbers::pi * beta_tilde, -0.5 * static_cast<double>(d));
  const double a = dot(omega, x_next) / std::sqrt(beta_tilde);
  return {norm * std::cos(a), norm * std::sin(a)};
}

/// (1/M) sum_i phi(omega_i, mu0)^T rho(omega_i, x_next): unbiased for
/// N(x_next | mu0, beta_tilde I).
inline double kernel_mc_estimate(const FourierBasis& basis, std::span<const double> mu0,
                                 std::span<const double> x_next) {
  if (mu0.size() != basis.dim() || x_next.size() != basis.dim())
    throw ShapeError("kernel_mc_estimate: dimension mismatch with basis");
  const std::size_t d = basis.dim();
  double acc = 0.0;
  for (const auto& w : basis.omegas) {
    const auto p = phi(w, mu0, basis.beta_tilde);
    const auto r = rho(w, x_next, basis.beta_tilde, d);
    acc += p[0] * r[0] + p[1] * r[1];
  }
  return acc / static_cast<double>(basis.omegas.size());
}

/// Exact N(x | mu, var I) density, the target of kernel_mc_estimate.
inline double gaussian_density(std::span<const double> x, std::span<const double> mu, double var) {
  require_same_size(x, mu, "gaussian_density");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mu[i]) * (x[i] - mu[i]);
  return std::pow(2.0 * std::numbers::pi * var, -0.5 * static_cast<double>(x.size())) * std::exp(-0.5 * sq / var);
}

}  // namespace diffcon
