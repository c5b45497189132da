#pragma once

#include <cmath>
#include <span>
#include <string>
#include <variant>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"

namespace diffcon {

/// r(x) = a^T x
struct LinearRewardForm {
  Vec a;
};

/// r(x) = -kappa ||x||^2 / 2
struct QuadraticRewardForm {
  double kappa = 1.0;
};

/// r(x) = high inside the ball ||x - center|| <= radius, low outside.
struct RegionRewardForm {
  Vec center;
  double radius = 1.0;
  double high = 1.0;
  double low = 0.0;
};

/// r(s) for a finite state space.
struct TabularRewardForm {
  Vec values;
};

enum class BaselineMode { fixed, first_batch_mean, exact_bisection };

inline const char* baseline_mode_name(BaselineMode m) {
  switch (m) {
    case BaselineMode::fixed: return "fixed";
    case BaselineMode::first_batch_mean: return "first-batch-mean";
    case BaselineMode::exact_bisection: return "exact-bisection";
  }
  return "?";
}

inline BaselineMode parse_baseline_mode(const std::string& s) {
  if (s == "fixed") return BaselineMode::fixed;
  if (s == "first-batch-mean") return BaselineMode::first_batch_mean;
  if (s == "exact-bisection") return BaselineMode::exact_bisection;
  throw ConfigError("unknown baseline mode '" + s + "' (expected fixed, first-batch-mean or exact-bisection)");
}

/// Terminal reward r(x_T, c). The continuous forms ignore c.
struct RewardSpec {
  std::variant<LinearRewardForm, QuadraticRewardForm, RegionRewardForm, TabularRewardForm> form;

  void validate(std::size_t dim) const {
    if (const auto* l = std::get_if<LinearRewardForm>(&form)) {
      if (l->a.size() != dim) throw ConfigError("linear reward: direction length differs from data dimension");
    } else if (const auto* r = std::get_if<RegionRewardForm>(&form)) {
      if (r->center.size() != dim) throw ConfigError("region reward: center length differs from data dimension");
      if (!(r->high > r->low)) throw ConfigError("region reward: high must exceed low");
      if (!(r->radius > 0.0)) throw ConfigError("region reward: radius must be positive");
    } else if (const auto* q = std::get_if<QuadraticRewardForm>(&form)) {
      if (!std::isfinite(q->kappa)) throw ConfigError("quadratic reward: kappa must be finite");
    }
  }

  double operator()(std::span<const double> x, int /*c*/ = 0) const {
    return std::visit(
        [&](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, LinearRewardForm>) {
            return dot(f.a, x);
          } else if constexpr (std::is_same_v<F, QuadraticRewardForm>) {
            return -0.5 * f.kappa * squared_norm(x);
          } else if constexpr (std::is_same_v<F, RegionRewardForm>) {
            double sq = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - f.center[i]) * (x[i] - f.center[i]);
            return sq <= f.radius * f.radius ? f.high : f.low;
          } else {
            throw ConfigError("tabular reward evaluated on a continuous state");
          }
        },
        form);
  }

  double state_reward(std::size_t s) const {
    const auto* t = std::get_if<TabularRewardForm>(&form);
    if (!t) throw ConfigError("state reward requested from a continuous reward");
    if (s >= t->values.size()) throw RangeError("state index outside tabular reward");
    return t->values[s];
  }

  /// high - low for region rewards, used to scale temperatures.
  double scale() const {
    if (const auto* r = std::get_if<RegionRewardForm>(&form)) return r->high - r->low;
    return 1.0;
  }
};

}  // namespace diffcon
