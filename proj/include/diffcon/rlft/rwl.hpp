#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffcon/diffusion/loss.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/lsmdp/oracle.hpp"
#include "diffcon/rlft/reward.hpp"

namespace diffcon {

/// exponential: exp((r - b) / tau)
/// polynomial:  [1 + (alpha - 1)(r - b) / tau]_+^(1 / (alpha - 1))
/// linear:      max(r - b, 0)
enum class WeightFamily { exponential, polynomial, linear };

inline const char* weight_family_name(WeightFamily f) {
  switch (f) {
    case WeightFamily::exponential: return "exponential";
    case WeightFamily::polynomial: return "polynomial";
    case WeightFamily::linear: return "linear";
  }
  return "?";
}

inline WeightFamily parse_weight_family(const std::string& s) {
  if (s == "exponential") return WeightFamily::exponential;
  if (s == "polynomial") return WeightFamily::polynomial;
  if (s == "linear") return WeightFamily::linear;
  throw ConfigError("unknown weight family '" + s + "' (expected exponential, polynomial or linear)");
}

struct WeightSpec {
  WeightFamily family = WeightFamily::exponential;
  double tau = 5e-4;
  double alpha = 1.0 + 5e-4;  // polynomial only

  /// The divergence whose (f')^-1 this family applies (linear has none).
  FDiv divergence() const {
    return family == WeightFamily::polynomial ? FDiv::alpha(alpha) : FDiv::kl();
  }
};

inline Vec rwl_weights(std::span<const double> rewards, const WeightSpec& spec, double b) {
  if (spec.family != WeightFamily::linear && !(spec.tau > 0.0)) throw DomainError("rwl_weights: tau must be positive");
  Vec w(rewards.size());
  switch (spec.family) {
    case WeightFamily::exponential:
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp((rewards[i] - b) / spec.tau);
        if (!std::isfinite(w[i]))
          throw NumericError("rwl_weights: exponential weight overflowed after the baseline shift; use a larger tau");
      }
      break;
    case WeightFamily::polynomial: {
      const FDiv fd = FDiv::alpha(spec.alpha);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = fd.fprime_inv((rewards[i] - b) / spec.tau);
        if (!std::isfinite(w[i])) throw NumericError("rwl_weights: polynomial weight is not finite; use a larger tau");
      }
      break;
    }
    case WeightFamily::linear:
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(rewards[i] - b, 0.0);
      break;
  }
  return w;
}

/// Rescales weights to mean 1; all-zero weights stay zero.
inline Vec normalize_mean_one(Vec w) {
  double s = 0.0;
  for (double v : w) s += v;
  if (s == 0.0) return w;
  const double k = static_cast<double>(w.size()) / s;
  for (auto& v : w) v *= k;
  return w;
}

/// exp((r - max r) / tau) renormalized to mean 1. Any baseline rescales the
/// exponential weights by a common factor, so this form is baseline-free.
inline Vec stabilized_exponential_weights(std::span<const double> rewards, double tau) {
  if (rewards.empty()) return {};
  const double mx = *std::max_element(rewards.begin(), rewards.end());
  return normalize_mean_one(rwl_weights(rewards, {WeightFamily::exponential, tau, 1.0}, mx));
}

/// Baseline for the given mode: `fixed` returns `fixed_value`;
/// `first_batch_mean` the mean of `rewards`; `exact_bisection` solves
/// sum_i probs_i w(r_i - b) = 1 (uniform probs when none are given).
inline double resolve_baseline(BaselineMode mode, std::span<const double> rewards, const WeightSpec& spec,
                               double fixed_value = 0.0, std::span<const double> probs = {}) {
  switch (mode) {
    case BaselineMode::fixed:
      return fixed_value;
    case BaselineMode::first_batch_mean: {
      if (rewards.empty()) throw ShapeError("baseline: empty reward batch");
      double s = 0.0;
      for (double r : rewards) s += r;
      return s / static_cast<double>(rewards.size());
    }
    case BaselineMode::exact_bisection: {
      if (spec.family == WeightFamily::linear) throw ConfigError("exact-bisection baseline needs an exponential or polynomial family");
      Vec uniform;
      if (probs.empty()) {
        uniform.assign(rewards.size(), 1.0 / static_cast<double>(rewards.size()));
        probs = uniform;
      }
      // exp((r - b) / tau) is (f')^-1 of KL shifted by one; solve with that generator.
      const FDiv fd = spec.family == WeightFamily::polynomial
                          ? FDiv::alpha(spec.alpha)
                          : FDiv::custom({[](double t) { return t * std::log(t) - t + 1.0; },
                                          [](double t) { return std::log(t); },
                                          [](double y) { return std::exp(y); }});
      return solve_baseline(fd, rewards, probs, spec.tau);
    }
  }
  return 0.0;
}

/// Weighted score-matching loss on behavior samples with fresh (t, xi) draws.
template <TrainablePredictor M>
LossResult rwl_loss(const M& model, const NoiseSchedule& sched, std::span<const Sample> samples,
                    std::span<const double> weights, Rng& rng, double p_drop = 0.0) {
  if (samples.empty()) throw ShapeError("rwl_loss: empty batch");
  if (weights.size() != samples.size()) throw ShapeError("rwl_loss: weight count mismatch");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("rwl_loss: weights must be finite and non-negative");
  const auto draws = draw_loss_noise(sched, samples.size(), model.dim(), p_drop, rng);
  return weighted_sm_loss(model, sched, samples, draws, weights);
}

}  // namespace diffcon
