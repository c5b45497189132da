#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "diffcon/diffusion/model.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

/// A clean sample together with its condition.
struct Sample {
  Vec x;
  int c = kNullCondition;
};

struct GaussianData {
  Vec mean;
  Vec var;
};

struct MixtureData {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Vec> vars;
};

/// Condition c ~ cond_probs selects Gaussian component c.
struct ConditionalMixtureData {
  std::vector<double> cond_probs;
  std::vector<Vec> means;
  std::vector<Vec> vars;
};

namespace detail {

inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

inline Vec sample_diag_gaussian(const Vec& mean, const Vec& var, Rng& rng) {
  Vec x(mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + std::sqrt(var[i]) * rng.normal();
  return x;
}

inline void check_distribution(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError(std::string(what) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string(what) + ": probabilities must sum to 1");
}

inline void check_components(std::size_t dim, const std::vector<Vec>& means, const std::vector<Vec>& vars) {
  if (means.size() != vars.size() || means.empty()) throw ConfigError("data: component count mismatch");
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != dim || vars[k].size() != dim) throw ConfigError("data: component dimension mismatch");
    for (double v : vars[k])
      if (!(v > 0.0)) throw ConfigError("data: variances must be positive");
  }
}

}  // namespace detail

/// Synthetic pretraining distribution p_data together with p_c.
struct DataSpec {
  std::size_t dim = 1;
  std::variant<GaussianData, MixtureData, ConditionalMixtureData> generator;

  static DataSpec standard_normal(std::size_t dim) {
    return {dim, GaussianData{Vec(dim, 0.0), Vec(dim, 1.0)}};
  }

  void validate() const {
    std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, GaussianData>) {
            detail::check_components(dim, {g.mean}, {g.var});
          } else if constexpr (std::is_same_v<G, MixtureData>) {
            detail::check_components(dim, g.means, g.vars);
            if (g.weights.size() != g.means.size()) throw ConfigError("mixture: weight count mismatch");
            detail::check_distribution(g.weights, "mixture weights");
          } else {
            detail::check_components(dim, g.means, g.vars);
            if (g.cond_probs.size() != g.means.size()) throw ConfigError("conditional mixture: p_c length mismatch");
            detail::check_distribution(g.cond_probs, "condition probabilities");
          }
        },
        generator);
  }

  /// Number of real conditions (0 for unconditional data).
  std::size_t num_conditions() const {
    if (const auto* g = std::get_if<ConditionalMixtureData>(&generator)) return g->cond_probs.size();
    return 0;
  }

  int sample_condition(Rng& rng) const {
    if (const auto* g = std::get_if<ConditionalMixtureData>(&generator))
      return static_cast<int>(detail::sample_categorical(g->cond_probs, rng));
    return kNullCondition;
  }

  /// Draw x ~ p_data(. | c) for a given condition.
  Vec sample_given(int c, Rng& rng) const {
    return std::visit(
        [&](const auto& g) -> Vec {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, GaussianData>) {
            return detail::sample_diag_gaussian(g.mean, g.var, rng);
          } else if constexpr (std::is_same_v<G, MixtureData>) {
            const auto k = detail::sample_categorical(g.weights, rng);
            return detail::sample_diag_gaussian(g.means[k], g.vars[k], rng);
          } else {
            if (c < 0 || static_cast<std::size_t>(c) >= g.means.size())
              throw RangeError("conditional data needs a real condition");
            return detail::sample_diag_gaussian(g.means[c], g.vars[c], rng);
          }
        },
        generator);
  }

  Sample sample(Rng& rng) const {
    const int c = sample_condition(rng);
    return {sample_given(c, rng), c};
  }

  std::vector<Sample> sample_batch(std::size_t n, Rng& rng) const {
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
    return out;
  }
};

}  // namespace diffcon
