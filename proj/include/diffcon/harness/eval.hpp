#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diffcon/controller/composed.hpp"
#include "diffcon/diffusion/data.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/harness/config.hpp"
#include "diffcon/lsmdp/gauss_tilt.hpp"
#include "diffcon/rlft/reward.hpp"
#include "diffcon/rlft/rollout.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

/// Fraction of pairs with a[i] > b[i]; ties count one half.
inline double win_rate(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("win_rate: paired samples differ in length");
  if (a.empty()) throw ShapeError("win_rate: no pairs");
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w += a[i] > b[i] ? 1.0 : (a[i] == b[i] ? 0.5 : 0.0);
  return w / static_cast<double>(a.size());
}

/// Half-width of the Wilson score interval for a proportion p over n trials.
inline double wilson_half_width(double p, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) throw ShapeError("wilson_half_width: no trials");
  const double nn = static_cast<double>(n);
  const double z2 = z * z;
  return z / (1.0 + z2 / nn) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
}

/// Wasserstein-1 between two equal-size 1-d samples: mean |a_(i) - b_(i)|
/// over sorted values.
inline double wasserstein1_sorted(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("wasserstein1_sorted: samples must be non-empty and equal size");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Mean of the per-coordinate sorted W1 distances (the plain W1 when d = 1).
inline double coordinate_w1(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.empty() || a.size() != b.size()) throw ShapeError("coordinate_w1: sample size mismatch");
  const std::size_t d = a.front().size();
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> xa, xb;
    for (const auto& v : a) xa.push_back(v[k]);
    for (const auto& v : b) xb.push_back(v[k]);
    s += wasserstein1_sorted(std::move(xa), std::move(xb));
  }
  return s / static_cast<double>(d);
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("total_variation: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

/// Empirical distribution over `states` values from visit counts.
inline Vec empirical_distribution(std::span<const std::size_t> states, std::size_t num_states) {
  if (states.empty()) throw ShapeError("empirical_distribution: no samples");
  Vec p(num_states, 0.0);
  for (std::size_t s : states) {
    if (s >= num_states) throw RangeError("empirical_distribution: state out of range");
    p[s] += 1.0;
  }
  for (auto& v : p) v /= static_cast<double>(states.size());
  return p;
}

/// Samples from p(x | c) exp(r(x) / tau) for each requested condition. Exact
/// for Gaussian data with a linear or quadratic reward; otherwise sampling
/// importance resampling from a pool of `pool_factor` data draws per target.
inline std::vector<Vec> tilted_target_samples(const DataSpec& data, const RewardSpec& reward, double tau,
                                              std::span<const int> conditions, std::size_t pool_factor, Rng& rng) {
  if (!(tau > 0.0)) throw DomainError("tilted target: tau must be positive");
  std::vector<Vec> out(conditions.size());
  if (const auto* g = std::get_if<GaussianData>(&data.generator)) {
    std::optional<GaussTiltSpec> spec;
    if (const auto* l = std::get_if<LinearRewardForm>(&reward.form)) spec = GaussTiltSpec{g->mean, g->var, LinearReward{l->a}, tau};
    if (const auto* q = std::get_if<QuadraticRewardForm>(&reward.form))
      spec = GaussTiltSpec{g->mean, g->var, QuadraticReward{q->kappa}, tau};
    if (spec) {
      const DiagGaussian t = gauss_tilt(*spec);
      for (auto& x : out) x = detail::sample_diag_gaussian(t.mean, t.var, rng);
      return out;
    }
  }
  std::map<int, std::vector<std::size_t>> by_condition;
  for (std::size_t i = 0; i < conditions.size(); ++i) by_condition[conditions[i]].push_back(i);
  for (const auto& [c, idx] : by_condition) {
    const std::size_t m = idx.size() * pool_factor;
    std::vector<Vec> pool(m);
    Vec logw(m);
    for (std::size_t j = 0; j < m; ++j) {
      pool[j] = data.sample_given(c, rng);
      logw[j] = reward(pool[j], c) / tau;
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    Vec w(m);
    for (std::size_t j = 0; j < m; ++j) w[j] = std::exp(logw[j] - mx);
    double s = 0.0;
    for (double v : w) s += v;
    for (auto& v : w) v /= s;
    for (std::size_t i : idx) out[i] = pool[detail::sample_categorical(w, rng)];
  }
  return out;
}

struct EvalRow {
  double lambda_model = 0.0;
  double win_rate = 0.0;
  double wr_ci = 0.0;
  double mean_reward_ft = 0.0;
  double mean_reward_pre = 0.0;
  double mc_kl = 0.0;
  double target_distance = std::numeric_limits<double>::quiet_NaN();  // NaN when no target applies
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::size_t best = 0;  // index of the highest win rate (first on ties)
  double target_tau = 0.0;
};

inline const char* kEvalCsvHeader = "lambda_model,win_rate,wr_ci,mean_reward_ft,mean_reward_pre,mc_kl,target_distance,n";

/// Paired evaluation: for every lambda_model, sample i of the fine-tuned
/// model and sample i of the pretrained model share their condition and
/// noise stream. Guidance lambda_cfg is applied to both.
inline EvalReport evaluate(const ComposedModel& finetuned, const ExperimentConfig& cfg, Rng& rng) {
  const NoiseSchedule& sched = finetuned.schedule();
  const DataSpec data = cfg.data_spec();
  const RewardSpec reward = cfg.reward_spec();
  reward.validate(finetuned.dim());
  const std::size_t n = cfg.eval.samples;
  RolloutOptions ropt;
  ropt.lambda_cfg = data.num_conditions() > 0 ? cfg.lambda_cfg : 0.0;
  const ConditionSampler cs = [&](Rng& r) { return data.sample_condition(r); };

  const Rng paired = rng.split(0);
  Rng pre_rng = paired;
  const RolloutBatch pre = rollout(finetuned.pretrained(), finetuned.pretrained(), sched, reward, cs, n, pre_rng, ropt);
  Vec pre_r;
  std::vector<int> conds;
  for (const auto& tr : pre.trajectories) {
    pre_r.push_back(tr.reward);
    conds.push_back(tr.c);
  }

  EvalReport rep;
  rep.target_tau = cfg.finetune_tau();
  std::vector<Vec> target;
  if (rep.target_tau > 0.0) {
    Rng target_rng = rng.split(1);
    target = tilted_target_samples(data, reward, rep.target_tau, conds, cfg.eval.target_pool, target_rng);
  }

  for (double lm : cfg.eval.lambda_sweep) {
    const ComposedModel m(finetuned.pretrained(), sched, finetuned.mode(), finetuned.lora(), finetuned.side(), lm);
    Rng ft_rng = paired;
    const RolloutBatch ft = rollout(m, m.pretrained(), sched, reward, cs, n, ft_rng, ropt);
    Vec ft_r;
    std::vector<Vec> xs;
    for (const auto& tr : ft.trajectories) {
      ft_r.push_back(tr.reward);
      xs.push_back(tr.terminal());
    }
    EvalRow row;
    row.lambda_model = lm;
    row.win_rate = win_rate(ft_r, pre_r);
    row.wr_ci = wilson_half_width(row.win_rate, n);
    row.mean_reward_ft = ft.mean_reward();
    row.mean_reward_pre = pre.mean_reward();
    row.mc_kl = mean_path_kl(ft, sched);
    if (!target.empty()) row.target_distance = coordinate_w1(xs, target);
    row.n = n;
    rep.rows.push_back(row);
  }
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].win_rate > rep.rows[rep.best].win_rate) rep.best = i;
  return rep;
}

}  // namespace diffcon
