#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "diffcon/diffusion/loss.hpp"
#include "diffcon/diffusion/model.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/diffusion/sampler.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/parallel.hpp"
#include "diffcon/rlft/advantage.hpp"
#include "diffcon/rlft/rollout.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

namespace detail {

struct StepLogp {
  double logp = 0.0;
  Vec eps_upstream;  // d logp / d eps
};

/// log N(x_next | mu_theta(x_t), beta_tilde I) under the current model and
/// its derivative with respect to the (guided) noise prediction:
/// d logp / d eps = -c_t (x_next - mu) / beta_tilde, c_t = beta_t / sqrt(alpha_t (1 - abar_t)).
template <NoisePredictor M>
StepLogp step_logp(const M& model, const NoiseSchedule& sched, std::span<const double> x, std::span<const double> x_next,
                   int c, int t, double lambda_cfg) {
  const Vec eps = guided_eps(model, x, c, t, lambda_cfg);
  const Vec mu = reverse_mean(sched, x, eps, t);
  const double var = sched.beta_tilde(t);
  StepLogp out{gaussian_log_density(x_next, mu, var), Vec(mu.size())};
  const double k = eps_coefficient(sched, t);
  for (std::size_t i = 0; i < mu.size(); ++i) out.eps_upstream[i] = -k * (x_next[i] - mu[i]) / var;
  return out;
}

/// Backpropagates an upstream on the guided prediction into `grad`.
template <TrainablePredictor M>
void guided_backward(const M& model, std::span<const double> x, int c, int t, double lambda_cfg,
                     std::span<const double> up, std::span<double> grad) {
  if (lambda_cfg == 0.0 || c == kNullCondition) {
    model.backward(x, c, t, up, grad);
    return;
  }
  Vec a(up.begin(), up.end());
  Vec b(up.begin(), up.end());
  for (auto& v : a) v *= 1.0 + lambda_cfg;
  for (auto& v : b) v *= -lambda_cfg;
  model.backward(x, c, t, a, grad);
  model.backward(x, kNullCondition, t, b, grad);
}

inline void check_advantages(const RolloutBatch& batch, const AdvantageEstimate& adv) {
  if (adv.values.size() != batch.size()) throw ShapeError("advantages do not match the batch");
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (adv.values[i].size() != static_cast<std::size_t>(batch.trajectories[i].steps()))
      throw ShapeError("advantages do not match trajectory " + std::to_string(i));
}

}  // namespace detail

/// Score-function surrogate -(1/n) sum_i sum_t A_{i,t} log p_theta(x_{t+1} | x_t)
/// over stochastic steps; its gradient is the negated policy-gradient estimator.
template <TrainablePredictor M>
LossResult pg_loss(const M& model, const NoiseSchedule& sched, const RolloutBatch& batch,
                   const AdvantageEstimate& adv, double lambda_cfg = 0.0) {
  detail::check_advantages(batch, adv);
  if (batch.size() == 0) throw ShapeError("pg_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossResult out{0.0, Vec(model.num_trainable(), 0.0)};
  out.loss = chunked_sum(batch.size(), out.grad.size(), out.grad, [&](std::size_t i, std::span<double> acc) {
    const Trajectory& tr = batch.trajectories[i];
    double loss = 0.0;
    for (int t = 1; t <= tr.steps(); ++t) {
      if (sched.beta_tilde(t) == 0.0) continue;
      const double a = adv.values[i][t - 1];
      if (a == 0.0) continue;
      auto s = detail::step_logp(model, sched, tr.states[t - 1], tr.states[t], tr.c, t, lambda_cfg);
      loss -= inv_n * a * s.logp;
      for (auto& v : s.eps_upstream) v *= -inv_n * a;
      detail::guided_backward(model, tr.states[t - 1], tr.c, t, lambda_cfg, s.eps_upstream, acc);
    }
    return loss;
  });
  return out;
}

/// Ascent direction (1/n) sum_i sum_t grad log p_theta * A_{i,t}.
template <TrainablePredictor M>
Vec policy_gradient(const M& model, const NoiseSchedule& sched, const RolloutBatch& batch,
                    const AdvantageEstimate& adv, double lambda_cfg = 0.0) {
  LossResult r = pg_loss(model, sched, batch, adv, lambda_cfg);
  for (auto& g : r.grad) g = -g;
  return r.grad;
}

/// Old log-densities recorded at collection time (behavior track).
inline std::vector<Vec> behavior_logps(const RolloutBatch& batch) {
  std::vector<Vec> out;
  for (const auto& tr : batch.trajectories) {
    Vec row;
    for (const auto& lp : tr.logp_behavior) row.push_back(lp ? *lp : 0.0);
    out.push_back(std::move(row));
  }
  return out;
}

/// Clipped surrogate -(1/n) sum_i sum_t min(clip(ratio, 1-delta, 1+delta) A, ratio A)
/// with ratio = exp(logp_current - logp_old). The gradient is ratio A grad logp
/// where the unclipped branch attains the minimum and 0 elsewhere.
template <TrainablePredictor M>
LossResult ppo_loss(const M& model, const NoiseSchedule& sched, const RolloutBatch& batch,
                    const std::vector<Vec>& old_logps, const AdvantageEstimate& adv, double delta,
                    double lambda_cfg = 0.0) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("PPO clip delta must lie in (0, 1)");
  detail::check_advantages(batch, adv);
  if (old_logps.size() != batch.size()) throw ShapeError("ppo_loss: old log-densities do not match the batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossResult out{0.0, Vec(model.num_trainable(), 0.0)};
  out.loss = chunked_sum(batch.size(), out.grad.size(), out.grad, [&](std::size_t i, std::span<double> acc) {
    const Trajectory& tr = batch.trajectories[i];
    double loss = 0.0;
    for (int t = 1; t <= tr.steps(); ++t) {
      if (sched.beta_tilde(t) == 0.0) continue;
      const double a = adv.values[i][t - 1];
      auto s = detail::step_logp(model, sched, tr.states[t - 1], tr.states[t], tr.c, t, lambda_cfg);
      const double ratio = std::exp(s.logp - old_logps[i][t - 1]);
      if (!std::isfinite(ratio))
        throw NumericError("ppo_loss: non-finite ratio at trajectory " + std::to_string(i) + ", step " +
                           std::to_string(t));
      const double clipped = std::clamp(ratio, 1.0 - delta, 1.0 + delta);
      const double unclipped_term = ratio * a;
      const double clipped_term = clipped * a;
      loss -= inv_n * std::min(clipped_term, unclipped_term);
      if (unclipped_term <= clipped_term && a != 0.0) {
        for (auto& v : s.eps_upstream) v *= -inv_n * a * ratio;
        detail::guided_backward(model, tr.states[t - 1], tr.c, t, lambda_cfg, s.eps_upstream, acc);
      }
    }
    return loss;
  });
  return out;
}

}  // namespace diffcon
