#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>

#include "diffcon/numkit/matrix.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// Forward corruption x_t = sqrt(abar_t) x_T + sqrt(1 - abar_t) xi.
inline Vec q_sample(const NoiseSchedule& sched, std::span<const double> x_clean, int t, std::span<const double> xi) {
  require_same_size(x_clean, xi, "q_sample");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double s = std::sqrt(1.0 - ab);
  Vec out(x_clean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_clean[i] + s * xi[i];
  return out;
}

/// Coefficient of eps in the reverse mean: beta_t / sqrt(alpha_t (1 - abar_t)).
inline double eps_coefficient(const NoiseSchedule& sched, int t) {
  return sched.beta(t) / std::sqrt(sched.alpha(t) * (1.0 - sched.alpha_bar(t)));
}

/// mu = x_t / sqrt(alpha_t) - beta_t eps / sqrt(alpha_t (1 - abar_t)).
inline Vec reverse_mean(const NoiseSchedule& sched, std::span<const double> x_t, std::span<const double> eps, int t) {
  require_same_size(x_t, eps, "reverse_mean");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double k = eps_coefficient(sched, t);
  Vec mu(x_t.size());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = inv_sqrt_alpha * x_t[i] - k * eps[i];
  return mu;
}

/// log N(x | mean, var I).
inline double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double var) {
  require_same_size(x, mean, "gaussian_log_density");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean[i];
    sq += d * d;
  }
  const double n = static_cast<double>(x.size());
  return -0.5 * sq / var - 0.5 * n * std::log(2.0 * std::numbers::pi * var);
}

struct ReverseStep {
  Vec next;
  // Absent when beta_tilde_t = 0 (the final, deterministic step).
  std::optional<double> log_density;
};

/// x_{t+1} = mu + sqrt(beta_tilde_t) xi.
inline ReverseStep reverse_step(const NoiseSchedule& sched, std::span<const double> x_t, std::span<const double> eps,
                                int t, std::span<const double> xi) {
  require_same_size(x_t, xi, "reverse_step");
  Vec mu = reverse_mean(sched, x_t, eps, t);
  const double var = sched.beta_tilde(t);
  if (var == 0.0) return {std::move(mu), std::nullopt};
  const double sd = std::sqrt(var);
  Vec next(mu.size());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] = mu[i] + sd * xi[i];
  const double logp = gaussian_log_density(next, mu, var);
  return {std::move(next), logp};
}

/// Classifier-free guidance: (1 + lambda) eps_c - lambda eps_null.
inline Vec cfg_combine(std::span<const double> eps_c, std::span<const double> eps_null, double lambda) {
  require_same_size(eps_c, eps_null, "cfg_combine");
  Vec out(eps_c.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_c[i] + lambda * (eps_c[i] - eps_null[i]);
  return out;
}

struct PosteriorParams {
  Vec mean;
  double variance = 0.0;
};

/// Forward-process bridge q(x_{t+1} | x_t, x_T).
inline PosteriorParams posterior_params(const NoiseSchedule& sched, std::span<const double> x_t,
                                        std::span<const double> x_clean, int t) {
  require_same_size(x_t, x_clean, "posterior_params");
  const double alpha = sched.alpha(t);
  const double beta = sched.beta(t);
  const double ab_t = sched.alpha_bar(t);
  const double ab_next = sched.alpha_bar(t + 1);
  const double cx = std::sqrt(alpha) * (1.0 - ab_next) / (1.0 - ab_t);
  const double c0 = beta * std::sqrt(ab_next) / (1.0 - ab_t);
  PosteriorParams p{Vec(x_t.size()), sched.beta_tilde(t)};
  for (std::size_t i = 0; i < x_t.size(); ++i) p.mean[i] = cx * x_t[i] + c0 * x_clean[i];
  return p;
}

}  // namespace diffcon
