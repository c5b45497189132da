#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "diffcon/diffusion/model.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/rng.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// Recorded reverse-process path: states x_1..x_T, and for each step
/// t = 1..T-1 the mean and log-density of the transition actually taken.
struct SamplePath {
  int c = kNullCondition;
  std::vector<Vec> states;
  std::vector<Vec> means;
  std::vector<std::optional<double>> log_density;
};

struct SampleResult {
  Vec x;
  std::optional<SamplePath> path;
};

/// Guided noise prediction. With lambda = 0 or a null condition the
/// unconditional branch is not evaluated and the result is the plain output.
template <NoisePredictor M>
Vec guided_eps(const M& model, std::span<const double> x, int c, int t, double lambda_cfg) {
  Vec eps = model.predict(x, c, t);
  if (lambda_cfg == 0.0 || c == kNullCondition) return eps;
  const Vec eps_null = model.predict(x, kNullCondition, t);
  return cfg_combine(eps, eps_null, lambda_cfg);
}

inline void require_finite(std::span<const double> x, int t) {
  for (double v : x)
    if (!std::isfinite(v)) throw DivergenceError(t, "non-finite state");
}

/// Ancestral sampling from x_1 ~ N(0, I) through t = 1..T-1.
template <NoisePredictor M>
SampleResult ancestral_sample(const M& model, const NoiseSchedule& sched, int c, double lambda_cfg, Rng& rng,
                              bool record = false) {
  const std::size_t d = model.dim();
  Vec x = rng.normal_vector(d);
  SampleResult result;
  if (record) {
    result.path.emplace();
    result.path->c = c;
    result.path->states.push_back(x);
  }
  for (int t = 1; t < sched.horizon(); ++t) {
    const Vec eps = guided_eps(model, x, c, t, lambda_cfg);
    const Vec xi = rng.normal_vector(d);
    ReverseStep step = reverse_step(sched, x, eps, t, xi);
    require_finite(step.next, t);
    if (record) {
      result.path->means.push_back(reverse_mean(sched, x, eps, t));
      result.path->log_density.push_back(step.log_density);
      result.path->states.push_back(step.next);
    }
    x = std::move(step.next);
  }
  result.x = std::move(x);
  return result;
}

}  // namespace diffcon
