#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "diffcon/controller/composed.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/lsmdp/chain.hpp"
#include "diffcon/numkit/grad_check.hpp"
#include "diffcon/rlft/advantage.hpp"
#include "diffcon/rlft/finetune.hpp"
#include "diffcon/rlft/policy_gradient.hpp"
#include "diffcon/rlft/rollout.hpp"
#include "diffcon/rlft/rwl.hpp"
#include "diffcon/rlft/tabular.hpp"
#include "diffcon/schedule.hpp"

using namespace diffcon;

namespace {

constexpr int kHorizon = 5;

NoiseSchedule small_schedule() { return build_linear(kHorizon, 0.05, 0.4); }

ScoreModel core_model(std::size_t dim, std::uint64_t seed) {
  ScoreModelDims d;
  d.data_dim = dim;
  d.time_dim = 4;
  d.hidden = 6;
  d.depth = 2;
  Rng rng(seed);
  return ScoreModel(d, kHorizon, rng);
}

ComposedModel random_composed(const ScoreModel& core, const NoiseSchedule& sched, Mode mode, std::uint64_t seed,
                              double scale = 0.3) {
  Rng rng(seed);
  ComposedModel m = ComposedModel::make(core, sched, mode, ControllerSpec{2, 0.7, 5, 2, Activation::tanh}, 1.0, rng);
  Vec p = m.trainable_params();
  for (auto& v : p) v = scale * rng.normal();
  m.set_trainable_params(p);
  return m;
}

RewardSpec linear_reward(std::size_t dim) { return RewardSpec{LinearRewardForm{Vec(dim, 1.0)}}; }

// V_T = r, V_t(s) = sum_k Q(s,k) V_{t+1}(k) - tau sum_k P(s,k) f(Q(s,k) / P(s,k)).
std::vector<Vec> reference_values(const TabularChain& chain, const std::vector<Matrix>& q, double tau, const FDiv& fd) {
  const int T = chain.steps;
  std::vector<Vec> v(static_cast<std::size_t>(T + 1));
  v[T] = chain.reward;
  for (int t = T - 1; t >= 0; --t) {
    const std::size_t rows = t == 0 ? 1 : chain.states;
    v[t].assign(rows, 0.0);
    for (std::size_t s = 0; s < rows; ++s)
      for (std::size_t k = 0; k < chain.states; ++k) {
        const double p = t == 0 ? chain.init[k] : chain.kernel(t)(s, k);
        const double qk = q[t](s, k);
        v[t][s] += qk * v[t + 1][k] - tau * p * fd.f(qk / p);
      }
  }
  return v;
}

double mean_of(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_error(const Vec& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST(Rollout, IdenticalModelsGiveZeroLogRatios) {
  const auto sched = small_schedule();
  const ScoreModel m = core_model(2, 1);
  Rng rng(3);
  const auto batch = rollout(m, m, sched, linear_reward(2), nullptr, 16, rng);
  for (const auto& tr : batch.trajectories) {
    ASSERT_EQ(tr.steps(), kHorizon - 1);
    for (int t = 1; t <= tr.steps(); ++t) {
      const auto lr = tr.log_ratio(t);
      if (sched.beta_tilde(t) == 0.0) {
        EXPECT_FALSE(lr.has_value());
      } else {
        ASSERT_TRUE(lr.has_value());
        EXPECT_EQ(*lr, 0.0);
      }
    }
    EXPECT_DOUBLE_EQ(tr.reward, tr.terminal()[0] + tr.terminal()[1]);
  }
  EXPECT_EQ(mean_path_kl(batch, sched), 0.0);
}

TEST(Rollout, SameSeedSameBatch) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 1);
  const ComposedModel b = random_composed(core, sched, Mode::graybox_gated, 5);
  Rng r1(11), r2(11);
  const auto x = rollout(b, core, sched, linear_reward(2), nullptr, 8, r1);
  const auto y = rollout(b, core, sched, linear_reward(2), nullptr, 8, r2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x.trajectories[i].states, y.trajectories[i].states);
    EXPECT_EQ(x.trajectories[i].reward, y.trajectories[i].reward);
  }
  const auto z = rollout(b, core, sched, linear_reward(2), nullptr, 8, r1);
  EXPECT_NE(x.trajectories[0].states.back(), z.trajectories[0].states.back());
}

TEST(Rollout, LogRatioMatchesSharedVarianceGaussianFormula) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 2);
  const ComposedModel b = random_composed(core, sched, Mode::joint, 8);
  Rng rng(4);
  const auto batch = rollout(b, core, sched, linear_reward(2), nullptr, 10, rng);
  for (const auto& tr : batch.trajectories) {
    double kl = 0.0;
    for (int t = 1; t <= tr.steps(); ++t) {
      const double var = sched.beta_tilde(t);
      if (var == 0.0) continue;
      const Vec& x = tr.states[t];
      const Vec& mb = tr.mean_behavior[t - 1];
      const Vec& mp = tr.mean_pretrained[t - 1];
      // ln N(x; mb, v) - ln N(x; mp, v) = (2 (x - mp).delta - |delta|^2) / (2 v), delta = mb - mp
      double cross = 0.0, dd = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double delta = mb[i] - mp[i];
        cross += (x[i] - mp[i]) * delta;
        dd += delta * delta;
      }
      EXPECT_NEAR(*tr.log_ratio(t), (2.0 * cross - dd) / (2.0 * var), 1e-10);
      kl += dd / (2.0 * var);
    }
    EXPECT_NEAR(path_kl(tr, sched), kl, 1e-12);
  }
}

TEST(Rollout, ZeroBatchRejected) {
  const auto sched = small_schedule();
  const ScoreModel m = core_model(1, 1);
  Rng rng(1);
  EXPECT_THROW(rollout(m, m, sched, linear_reward(1), nullptr, 0, rng), ConfigError);
}

TEST(SoftAdvantageExact, PassivePolicyWithZeroRewardIsZero) {
  Rng rng(21);
  TabularChain chain = random_chain(3, 4, rng);
  std::fill(chain.reward.begin(), chain.reward.end(), 0.0);
  const auto q = passive_policy_kernels(chain);
  for (const FDiv& fd : {FDiv::kl(), FDiv::alpha(2.0)})
    for (const auto& a : soft_advantage_exact(chain, q, 0.7, fd))
      for (double v : a.data) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(SoftAdvantageExact, KlSpecialization) {
  // For KL, f'(z) - f(z)/z = 1, so A = V_{t+1}(s') - V_t(s) - tau ln(Q / P).
  Rng rng(22);
  const TabularChain chain = random_chain(4, 4, rng);
  const TabularPolicy pol = TabularPolicy::random(chain, rng);
  const auto q = pol.kernels();
  const double tau = 0.8;
  const auto v = reference_values(chain, q, tau, FDiv::kl());
  const auto adv = soft_advantage_exact(chain, q, tau, FDiv::kl());
  for (int t = 0; t < chain.steps; ++t)
    for (std::size_t s = 0; s < q[t].rows; ++s)
      for (std::size_t k = 0; k < chain.states; ++k) {
        const double p = t == 0 ? chain.init[k] : chain.kernel(t)(s, k);
        const double expected = v[t + 1][k] - v[t][s] - tau * std::log(q[t](s, k) / p);
        EXPECT_NEAR(adv[t](s, k), expected, 1e-12);
      }
}

TEST(SoftAdvantageExact, ConditionalMeanIsZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const TabularChain chain = random_chain(2 + seed % 4, 2 + static_cast<int>(seed % 4), rng);
    const TabularPolicy pol = TabularPolicy::random(chain, rng);
    const auto q = pol.kernels();
    for (const FDiv& fd : {FDiv::kl(), FDiv::alpha(2.0), FDiv::alpha(0.5)})
      for (double tau : {0.0, 0.5, 2.0}) {
        const auto adv = soft_advantage_exact(chain, q, tau, fd);
        for (int t = 0; t < chain.steps; ++t)
          for (std::size_t s = 0; s < q[t].rows; ++s) {
            double m = 0.0;
            for (std::size_t k = 0; k < chain.states; ++k) m += q[t](s, k) * adv[t](s, k);
            EXPECT_NEAR(m, 0.0, 1e-10);
          }
      }
  }
}

TEST(PolicyValues, MatchReferenceRecursion) {
  Rng rng(23);
  const TabularChain chain = random_chain(3, 5, rng);
  const TabularPolicy pol = TabularPolicy::random(chain, rng);
  for (const FDiv& fd : {FDiv::kl(), FDiv::alpha(2.0)}) {
    const auto v = reference_values(chain, pol.kernels(), 1.3, fd);
    EXPECT_NEAR(policy_objective(chain, pol, 1.3, fd), v[0][0], 1e-12);
  }
}

TEST(ExactPolicyGradient, MatchesFiniteDifferencesOfObjective) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(300 + seed);
    const TabularChain chain = random_chain(3, 3, rng);
    TabularPolicy pol = TabularPolicy::random(chain, rng);
    const Vec theta = pol.params();
    for (const FDiv& fd : {FDiv::kl(), FDiv::alpha(2.0)})
      for (double tau : {0.0, 1.0}) {
        const Vec g = exact_policy_gradient(chain, pol, tau, fd);
        ASSERT_EQ(g.size(), theta.size());
        double err = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double h = 1e-5;
          Vec p = theta;
          TabularPolicy probe = pol;
          p[i] = theta[i] + h;
          probe.set_params(p);
          const double up = policy_objective(chain, probe, tau, fd);
          p[i] = theta[i] - h;
          probe.set_params(p);
          const double down = policy_objective(chain, probe, tau, fd);
          const double fdg = (up - down) / (2 * h);
          err += (g[i] - fdg) * (g[i] - fdg);
          norm += fdg * fdg;
        }
        EXPECT_LT(std::sqrt(err / norm), 1e-6) << fd.name() << " tau " << tau;
      }
  }
}

TEST(SoftAdvantageMc, ConstantRewardUnderPassivePolicyIsZero) {
  Rng rng(31);
  TabularChain chain = random_chain(3, 3, rng);
  std::fill(chain.reward.begin(), chain.reward.end(), 2.5);
  const auto paths = sample_tabular_paths(chain, passive_policy_kernels(chain), 200, rng);
  for (const auto& p : paths)
    for (double lr : p.log_ratio) EXPECT_NEAR(lr, 0.0, 1e-15);
  for (double a : soft_advantage_mc(paths, 0.9, FDiv::kl())) EXPECT_NEAR(a, 0.0, 1e-15);
}

TEST(SoftAdvantageMc, KlReturnSubtractsSummedLogRatios) {
  const Vec lr{0.3, -0.1, 0.25};
  EXPECT_NEAR(soft_return(1.0, lr, 2.0, FDiv::kl()), 1.0 - 2.0 * 0.45, 1e-15);
  EXPECT_EQ(soft_return(1.0, lr, 0.0, FDiv::alpha(2.0)), 1.0);
  // alpha = 2: f(z) / z = (z - 1)^2 / (2 z)
  double pen = 0.0;
  for (double l : lr) pen += (std::exp(l) - 1.0) * (std::exp(l) - 1.0) / (2.0 * std::exp(l));
  EXPECT_NEAR(soft_return(1.0, lr, 2.0, FDiv::alpha(2.0)), 1.0 - 2.0 * pen, 1e-14);
}

TEST(SoftAdvantageMc, ReturnsAreUnbiasedForObjective) {
  // E_Q[G] = J for any f, since E_Q[f(z) / z] = E_P[f(z)] step by step.
  Rng rng(41);
  const TabularChain chain = random_chain(3, 4, rng);
  const TabularPolicy pol = TabularPolicy::random(chain, rng, 0.7);
  for (const FDiv& fd : {FDiv::kl(), FDiv::alpha(2.0)}) {
    const double j = reference_values(chain, pol.kernels(), 0.5, fd)[0][0];
    int inside = 0;
    for (int seed = 0; seed < 50; ++seed) {
      Rng r(1000 + static_cast<std::uint64_t>(seed));
      const auto paths = sample_tabular_paths(chain, pol.kernels(), 2000, r);
      const Vec a = soft_advantage_mc(paths, 0.5, fd, j);
      if (std::abs(mean_of(a)) < 4.0 * std_error(a)) ++inside;
    }
    EXPECT_GE(inside, 49) << fd.name();
  }
}

TEST(SoftAdvantageMc, BatchMeanBaselineCentersAdvantages) {
  Rng rng(42);
  const TabularChain chain = random_chain(3, 3, rng);
  const auto paths = sample_tabular_paths(chain, TabularPolicy::random(chain, rng).kernels(), 300, rng);
  EXPECT_NEAR(mean_of(soft_advantage_mc(paths, 1.0, FDiv::kl())), 0.0, 1e-12);
  EXPECT_THROW(soft_advantage_mc(std::vector<TabularPath>{}, 1.0, FDiv::kl()), ShapeError);
}

TEST(PolicyGradient, ZeroAdvantageGivesZeroGradient) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 3);
  const ComposedModel m = random_composed(core, sched, Mode::graybox_gated, 9);
  Rng rng(5);
  const auto batch = rollout(m, core, sched, linear_reward(2), nullptr, 6, rng);
  AdvantageEstimate adv;
  for (const auto& tr : batch.trajectories) adv.values.emplace_back(static_cast<std::size_t>(tr.steps()), 0.0);
  const LossResult r = pg_loss(m, sched, batch, adv);
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad) EXPECT_EQ(g, 0.0);
}

TEST(PolicyGradient, SurrogateGradientMatchesFiniteDifferences) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 3);
  for (Mode mode : {Mode::graybox_gated, Mode::lora_only}) {
    ComposedModel m = random_composed(core, sched, mode, 10);
    Rng rng(6);
    const auto batch = rollout(m, core, sched, linear_reward(2), nullptr, 4, rng);
    const auto adv = soft_advantage_mc(batch, 0.2, FDiv::kl());
    const DifferentiableLoss fn = [&](std::span<const double> p) {
      m.set_trainable_params(p);
      const LossResult r = pg_loss(m, sched, batch, adv);
      return LossAndGrad{r.loss, r.grad};
    };
    EXPECT_LT(grad_check(fn, m.trainable_params()), 1e-4) << mode_name(mode);
  }
}

TEST(Ppo, UnitRatioEqualsPolicyGradient) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 3);
  const ComposedModel m = random_composed(core, sched, Mode::joint, 12);
  Rng rng(7);
  const auto batch = rollout(m, core, sched, linear_reward(2), nullptr, 5, rng);
  const auto adv = soft_advantage_mc(batch, 0.1, FDiv::kl());
  const LossResult pg = pg_loss(m, sched, batch, adv);
  const LossResult ppo = ppo_loss(m, sched, batch, behavior_logps(batch), adv, 0.2);
  ASSERT_EQ(pg.grad.size(), ppo.grad.size());
  for (std::size_t i = 0; i < pg.grad.size(); ++i) EXPECT_NEAR(ppo.grad[i], pg.grad[i], 1e-12 * (1 + std::abs(pg.grad[i])));
}

TEST(Ppo, ClippedBranches) {
  EXPECT_EQ(std::clamp(1.3, 0.8, 1.2), 1.2);
  const auto sched = small_schedule();
  const ScoreModel core = core_model(1, 4);
  const ComposedModel m = random_composed(core, sched, Mode::graybox_gated, 13);
  Rng rng(8);
  const auto batch = rollout(m, core, sched, linear_reward(1), nullptr, 1, rng);
  const auto& tr = batch.trajectories[0];
  int stochastic = 0;
  for (int t = 1; t <= tr.steps(); ++t) stochastic += sched.beta_tilde(t) > 0.0;

  const auto run = [&](double a, double ratio) {
    AdvantageEstimate adv;
    adv.values.emplace_back(static_cast<std::size_t>(tr.steps()), a);
    auto old = behavior_logps(batch);
    for (auto& v : old[0]) v -= std::log(ratio);
    return ppo_loss(m, sched, batch, old, adv, 0.2);
  };
  // A > 0, ratio 1.3: min(1.2 A, 1.3 A) = 1.2 A and no gradient flows.
  const LossResult up = run(2.0, 1.3);
  EXPECT_NEAR(up.loss, -stochastic * 1.2 * 2.0, 1e-9);
  for (double g : up.grad) EXPECT_EQ(g, 0.0);
  // A < 0, ratio 0.5: min(0.8 A, 0.5 A) = 0.8 A, again the clipped branch.
  const LossResult down = run(-2.0, 0.5);
  EXPECT_NEAR(down.loss, stochastic * 0.8 * 2.0, 1e-9);
  for (double g : down.grad) EXPECT_EQ(g, 0.0);
  // A < 0, ratio 1.3: the unclipped 1.3 A is the minimum and carries the gradient.
  const LossResult open = run(-2.0, 1.3);
  EXPECT_NEAR(open.loss, stochastic * 1.3 * 2.0, 1e-9);
  double gn = 0.0;
  for (double g : open.grad) gn += g * g;
  EXPECT_GT(gn, 0.0);
}

TEST(Ppo, DeltaOutsideUnitIntervalRejected) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(1, 4);
  const ComposedModel m = random_composed(core, sched, Mode::graybox_gated, 13);
  Rng rng(8);
  const auto batch = rollout(m, core, sched, linear_reward(1), nullptr, 1, rng);
  const auto adv = soft_advantage_mc(batch, 0.1, FDiv::kl());
  EXPECT_THROW(ppo_loss(m, sched, batch, behavior_logps(batch), adv, 0.0), ConfigError);
  EXPECT_THROW(ppo_loss(m, sched, batch, behavior_logps(batch), adv, 1.0), ConfigError);
}

TEST(RwlWeights, ExponentialValues) {
  const WeightSpec spec{WeightFamily::exponential, 1e-4, 1.0};
  EXPECT_EQ(rwl_weights(Vec{0.0}, spec, 0.0)[0], 1.0);
  EXPECT_NEAR(rwl_weights(Vec{2e-4}, spec, 0.0)[0], 7.3891, 1e-4);
  EXPECT_NEAR(rwl_weights(Vec{2e-4}, spec, 0.0)[0], std::exp(2.0), 1e-12);
}

TEST(RwlWeights, PolynomialDefaultSetting) {
  const WeightSpec spec{WeightFamily::polynomial, 5e-4, 1.0 + 5e-4};
  EXPECT_NEAR(rwl_weights(Vec{0.0}, spec, 0.0)[0], 1.0, 1e-12);
  const double w = rwl_weights(Vec{5e-4}, spec, 0.0)[0];
  EXPECT_NEAR(w, std::pow(1.0005, 2000.0), 1e-9);
  EXPECT_NEAR(w, 2.7176, 1e-4);
  EXPECT_NEAR(rwl_weights(Vec{0.3}, spec, 0.3)[0], 1.0, 1e-12);
}

TEST(RwlWeights, ExponentialShiftInvariantAfterNormalization) {
  const Vec r{0.1, -0.4, 0.7, 0.2};
  Vec shifted = r;
  for (auto& v : shifted) v += 3.0;
  const WeightSpec spec{WeightFamily::exponential, 0.5, 1.0};
  const Vec a = normalize_mean_one(rwl_weights(r, spec, 0.0));
  const Vec b = normalize_mean_one(rwl_weights(shifted, spec, 0.0));
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  const Vec s = stabilized_exponential_weights(shifted, 0.5);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a[i], s[i], 1e-12);
}

TEST(RwlWeights, LinearFamilyAndErrors) {
  const Vec w = rwl_weights(Vec{0.5, -1.0, 2.0}, {WeightFamily::linear, 1.0, 1.0}, 0.25);
  EXPECT_EQ(w, (Vec{0.25, 0.0, 1.75}));
  EXPECT_THROW(rwl_weights(Vec{1.0}, {WeightFamily::exponential, 0.0, 1.0}, 0.0), DomainError);
  EXPECT_THROW(rwl_weights(Vec{1.0}, {WeightFamily::exponential, 1e-4, 1.0}, 0.0), NumericError);
  EXPECT_THROW(parse_weight_family("boltzmann"), ConfigError);
}

TEST(RwlWeights, BisectionBaselineNormalizesWeights) {
  const Vec r{0.2, -0.1, 0.5, 0.05};
  const Vec probs{0.1, 0.4, 0.2, 0.3};
  for (const WeightSpec& spec : {WeightSpec{WeightFamily::exponential, 0.3, 1.0},
                                 WeightSpec{WeightFamily::polynomial, 0.3, 2.0}}) {
    const double b = resolve_baseline(BaselineMode::exact_bisection, r, spec, 0.0, probs);
    const Vec w = rwl_weights(r, spec, b);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += probs[i] * w[i];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_DOUBLE_EQ(resolve_baseline(BaselineMode::first_batch_mean, Vec{1.0, 2.0}, {}), 1.5);
  EXPECT_EQ(resolve_baseline(BaselineMode::fixed, Vec{1.0}, {}, 0.7), 0.7);
}

TEST(RwlLoss, ZeroWeightsGiveZero) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 5);
  const ComposedModel m = random_composed(core, sched, Mode::graybox_gated, 14);
  Rng rng(9);
  const auto samples = DataSpec::standard_normal(2).sample_batch(8, rng);
  const LossResult r = rwl_loss(m, sched, samples, Vec(8, 0.0), rng);
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad) EXPECT_EQ(g, 0.0);
}

TEST(RwlLoss, UnitWeightsEqualScoreMatchingLoss) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 5);
  const ComposedModel m = random_composed(core, sched, Mode::joint, 14);
  Rng data_rng(9);
  const auto samples = DataSpec::standard_normal(2).sample_batch(8, data_rng);
  Rng r1(10), r2(10);
  const LossResult a = rwl_loss(m, sched, samples, Vec(8, 1.0), r1, 0.2);
  const LossResult b = sm_loss(m, sched, samples, 0.2, r2);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(RwlLoss, GradientMatchesFiniteDifferences) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(2, 5);
  ComposedModel m = random_composed(core, sched, Mode::graybox_gated, 15);
  Rng data_rng(9);
  const auto samples = DataSpec::standard_normal(2).sample_batch(6, data_rng);
  const Vec w{0.5, 1.5, 0.2, 2.0, 1.0, 0.8};
  const DifferentiableLoss fn = [&](std::span<const double> p) {
    m.set_trainable_params(p);
    Rng r(77);
    const LossResult res = rwl_loss(m, sched, samples, w, r);
    return LossAndGrad{res.loss, res.grad};
  };
  EXPECT_LT(grad_check(fn, m.trainable_params()), 1e-4);
}

TEST(RwlLoss, BadInputsRejected) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(1, 5);
  const ComposedModel m = random_composed(core, sched, Mode::graybox_gated, 15);
  Rng rng(1);
  const auto samples = DataSpec::standard_normal(1).sample_batch(2, rng);
  EXPECT_THROW(rwl_loss(m, sched, std::span<const Sample>{}, Vec{}, rng), ShapeError);
  EXPECT_THROW(rwl_loss(m, sched, samples, Vec{1.0}, rng), ShapeError);
  EXPECT_THROW(rwl_loss(m, sched, samples, Vec{1.0, -1.0}, rng), DomainError);
}

TEST(SftFinetune, ZeroStepsLeavesModelUnchanged) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(1, 6);
  ComposedModel m = random_composed(core, sched, Mode::lora_only, 16);
  const Vec before = m.trainable_params();
  Rng rng(2);
  const auto targets = DataSpec::standard_normal(1).sample_batch(10, rng);
  sft_finetune(m, sched, targets, 0, 1e-3, 0.1, 4, rng);
  EXPECT_EQ(m.trainable_params(), before);
}

TEST(Finetune, GrayboxRunsLeaveFrozenCoreBytesUnchanged) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(1, 7);
  const auto core_bytes = serialize_pretrained(core);
  const DataSpec data = DataSpec::standard_normal(1);
  for (Algorithm alg : {Algorithm::rwl, Algorithm::ppo}) {
    for (Mode mode : {Mode::graybox_gated, Mode::graybox_ungated}) {
      Rng init(3);
      ComposedModel m = ComposedModel::make(core, sched, mode, ControllerSpec{}, 1.0, init);
      const Vec before = m.trainable_params();
      FinetuneOptions opt;
      opt.algorithm = alg;
      opt.iterations = 4;
      opt.batch = 8;
      opt.monitor_every = 0;
      opt.lr_side = 1e-2;
      Rng rng(4);
      finetune(m, linear_reward(1), data, opt, rng);
      EXPECT_EQ(serialize_pretrained(m.pretrained()), core_bytes) << mode_name(mode);
      EXPECT_NE(m.trainable_params(), before) << mode_name(mode);
    }
  }
}

TEST(Finetune, DataSourcedRwlPoolRequiresPositiveSize) {
  const auto sched = small_schedule();
  const ScoreModel core = core_model(1, 7);
  Rng init(3);
  ComposedModel m = ComposedModel::make(core, sched, Mode::graybox_gated, ControllerSpec{}, 1.0, init);
  FinetuneOptions opt;
  opt.rwl_source = RwlSource::data;
  opt.rwl_pool = 0;
  opt.iterations = 2;
  Rng rng(1);
  EXPECT_THROW(finetune(m, linear_reward(1), DataSpec::standard_normal(1), opt, rng), ConfigError);
  opt.rwl_pool = 64;
  opt.batch = 8;
  opt.monitor_every = 0;
  EXPECT_NO_THROW(finetune(m, linear_reward(1), DataSpec::standard_normal(1), opt, rng));
  EXPECT_EQ(parse_rwl_source(rwl_source_name(RwlSource::data)), RwlSource::data);
}
