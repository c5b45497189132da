#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "diffcon/diffusion/model.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/diffusion/sampler.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/parallel.hpp"
#include "diffcon/rlft/reward.hpp"
#include "diffcon/rng.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// One reverse-process path. states holds x_1..x_T; the per-step vectors are
/// indexed by t - 1 for t = 1..T-1. Log-densities are absent at the
/// deterministic final step.
struct Trajectory {
  int c = kNullCondition;
  std::vector<Vec> states;
  std::vector<Vec> mean_behavior;
  std::vector<Vec> mean_pretrained;
  std::vector<std::optional<double>> logp_behavior;
  std::vector<std::optional<double>> logp_pretrained;
  double reward = 0.0;

  int steps() const { return static_cast<int>(mean_behavior.size()); }
  const Vec& terminal() const { return states.back(); }

  /// ln zeta_t = ln p_behavior - ln p_pretrained at the step taken from x_t.
  std::optional<double> log_ratio(int t) const {
    const auto& b = logp_behavior[static_cast<std::size_t>(t - 1)];
    const auto& p = logp_pretrained[static_cast<std::size_t>(t - 1)];
    if (!b || !p) return std::nullopt;
    return *b - *p;
  }
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }

  double mean_reward() const {
    double s = 0.0;
    for (const auto& tr : trajectories) s += tr.reward;
    return trajectories.empty() ? 0.0 : s / static_cast<double>(trajectories.size());
  }
};

using ConditionSampler = std::function<int(Rng&)>;

struct RolloutOptions {
  double lambda_cfg = 0.0;  // guidance applied to both behavior and pretrained means
  bool record_states = true;
};

/// n trajectories from the behavior model. Trajectory i uses the stream
/// rng.split(i), so results do not depend on the worker count; rng itself is
/// advanced by one draw so consecutive calls differ.
template <NoisePredictor B, NoisePredictor P>
RolloutBatch rollout(const B& behavior, const P& pretrained, const NoiseSchedule& sched, const RewardSpec& reward,
                     const ConditionSampler& c_sampler, std::size_t n, Rng& rng, const RolloutOptions& opt = {}) {
  if (n == 0) throw ConfigError("rollout: batch size must be at least 1");
  const Rng base(rng.next_u64());
  RolloutBatch batch;
  batch.trajectories.resize(n);
  const std::size_t d = behavior.dim();
  parallel_for(n, [&](std::size_t i) {
    Rng r = base.split(i);
    Trajectory tr;
    tr.c = c_sampler ? c_sampler(r) : kNullCondition;
    Vec x = r.normal_vector(d);
    tr.states.push_back(x);
    for (int t = 1; t < sched.horizon(); ++t) {
      const Vec eb = guided_eps(behavior, x, tr.c, t, opt.lambda_cfg);
      const Vec ep = guided_eps(pretrained, x, tr.c, t, opt.lambda_cfg);
      const Vec xi = r.normal_vector(d);
      ReverseStep step = reverse_step(sched, x, eb, t, xi);
      require_finite(step.next, t);
      Vec mb = reverse_mean(sched, x, eb, t);
      Vec mp = reverse_mean(sched, x, ep, t);
      const double var = sched.beta_tilde(t);
      tr.logp_behavior.push_back(step.log_density);
      tr.logp_pretrained.push_back(var > 0.0 ? std::optional<double>(gaussian_log_density(step.next, mp, var))
                                             : std::nullopt);
      tr.mean_behavior.push_back(std::move(mb));
      tr.mean_pretrained.push_back(std::move(mp));
      x = std::move(step.next);
      tr.states.push_back(x);
    }
    tr.reward = reward(x, tr.c);
    batch.trajectories[i] = std::move(tr);
  });
  return batch;
}

/// Sum over stochastic steps of KL(behavior step || pretrained step); exact
/// given the visited states since both steps share the variance beta_tilde.
inline double path_kl(const Trajectory& tr, const NoiseSchedule& sched) {
  double kl = 0.0;
  for (int t = 1; t <= tr.steps(); ++t) {
    const double var = sched.beta_tilde(t);
    if (var > 0.0) kl += kl_gauss_shared_cov(tr.mean_behavior[t - 1], tr.mean_pretrained[t - 1], var);
  }
  return kl;
}

inline double mean_path_kl(const RolloutBatch& batch, const NoiseSchedule& sched) {
  double s = 0.0;
  for (const auto& tr : batch.trajectories) s += path_kl(tr, sched);
  return batch.trajectories.empty() ? 0.0 : s / static_cast<double>(batch.size());
}

}  // namespace diffcon
