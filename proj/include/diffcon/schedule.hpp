#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "diffcon/errors.hpp"

namespace diffcon {

/// Diffusion coefficients in reversed indexing: x_T is clean data, x_1 is
/// (approximately) pure noise. Indices are 1-based as in the math:
///   beta_t, alpha_t, beta_tilde_t  for t = 1..T-1
///   alpha_bar_t                    for t = 1..T, with alpha_bar_T = 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// betas[i] is beta_{i+1}; T = betas.size() + 1.
  explicit NoiseSchedule(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("schedule needs T >= 2");
    horizon_ = static_cast<int>(betas.size()) + 1;
    beta_.assign(horizon_ + 1, 0.0);
    alpha_.assign(horizon_ + 1, 1.0);
    alpha_bar_.assign(horizon_ + 1, 1.0);
    beta_tilde_.assign(horizon_ + 1, 0.0);
    for (int t = 1; t < horizon_; ++t) {
      const double b = betas[t - 1];
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta_" + std::to_string(t) + " = " + std::to_string(b) + " outside (0,1)");
      beta_[t] = b;
      alpha_[t] = 1.0 - b;
    }
    alpha_bar_[horizon_] = 1.0;
    for (int t = horizon_ - 1; t >= 1; --t) alpha_bar_[t] = alpha_[t] * alpha_bar_[t + 1];
    for (int t = 1; t < horizon_; ++t)
      beta_tilde_[t] = beta_[t] * (1.0 - alpha_bar_[t + 1]) / (1.0 - alpha_bar_[t]);
  }

  int horizon() const { return horizon_; }

  double beta(int t) const { return beta_[check_step(t)]; }
  double alpha(int t) const { return alpha_[check_step(t)]; }
  double beta_tilde(int t) const { return beta_tilde_[check_step(t)]; }
  double alpha_bar(int t) const {
    if (t < 1 || t > horizon_) throw RangeError("alpha_bar: t=" + std::to_string(t) + " outside [1, T]");
    return alpha_bar_[t];
  }

  std::vector<double> betas() const { return {beta_.begin() + 1, beta_.begin() + horizon_}; }

 private:
  int check_step(int t) const {
    if (t < 1 || t >= horizon_) throw RangeError("step t=" + std::to_string(t) + " outside [1, T-1]");
    return t;
  }

  int horizon_ = 0;
  std::vector<double> beta_, alpha_, alpha_bar_, beta_tilde_;
};

inline NoiseSchedule build_constant(int horizon, double beta) {
  if (horizon < 2) throw ConfigError("schedule needs T >= 2");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0,1)");
  return NoiseSchedule(std::vector<double>(horizon - 1, beta));
}

/// beta_1 = beta_max (step next to pure noise) decreasing linearly to
/// beta_{T-1} = beta_min. With T = 2 the single step uses beta_max.
inline NoiseSchedule build_linear(int horizon, double beta_min, double beta_max) {
  if (horizon < 2) throw ConfigError("schedule needs T >= 2");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw ConfigError("linear schedule needs 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(horizon - 1);
  const int steps = horizon - 1;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_max - frac * (beta_max - beta_min);
  }
  return NoiseSchedule(std::move(betas));
}

/// beta_1 = beta_max decreasing geometrically to beta_{T-1} = beta_min, so
/// noise levels are spread evenly in log scale near the clean end.
inline NoiseSchedule build_geometric(int horizon, double beta_min, double beta_max) {
  if (horizon < 2) throw ConfigError("schedule needs T >= 2");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw ConfigError("geometric schedule needs 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(horizon - 1);
  const int steps = horizon - 1;
  const double ratio = std::log(beta_min / beta_max);
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_max * std::exp(frac * ratio);
  }
  if (steps > 1) betas.back() = beta_min;  // exact endpoint despite rounding in exp
  return NoiseSchedule(std::move(betas));
}

}  // namespace diffcon
