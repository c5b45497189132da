#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

/// Finite-state passive chain x_1 -> ... -> x_T with a terminal reward.
/// kernels[t - 1] is P_t, the S x S transition from step t to t + 1.
struct TabularChain {
  std::size_t states = 0;
  int steps = 0;
  Vec init;
  std::vector<Matrix> kernels;
  Vec reward;

  const Matrix& kernel(int t) const {
    if (t < 1 || t >= steps) throw RangeError("chain kernel index " + std::to_string(t) + " outside [1, T-1]");
    return kernels[static_cast<std::size_t>(t - 1)];
  }

  void validate() const {
    if (states == 0 || steps < 1) throw ConfigError("chain needs at least one state and one step");
    if (init.size() != states || reward.size() != states) throw ShapeError("chain: init/reward length mismatch");
    if (kernels.size() != static_cast<std::size_t>(steps - 1)) throw ShapeError("chain: expected T-1 kernels");
    auto check_row = [](std::span<const double> row, const char* what) {
      double s = 0.0;
      for (double v : row) {
        if (!(v >= 0.0)) throw ConfigError(std::string(what) + ": negative probability");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-12) throw ConfigError(std::string(what) + ": row does not sum to 1");
    };
    check_row(init, "chain initial distribution");
    for (const auto& k : kernels) {
      if (k.rows != states || k.cols != states) throw ShapeError("chain: kernel is not S x S");
      for (std::size_t s = 0; s < states; ++s) check_row(k.row(s), "chain kernel");
    }
    for (double r : reward)
      if (!std::isfinite(r)) throw ConfigError("chain: non-finite reward");
  }
};

namespace detail {

inline Vec random_simplex_point(std::size_t n, Rng& rng) {
  // Normalized exponentials: uniform on the simplex, strictly positive.
  Vec p(n);
  double s = 0.0;
  for (auto& v : p) {
    v = -std::log(rng.uniform());
    s += v;
  }
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace detail

/// Chain with uniformly random (Dirichlet(1)) rows and N(0, reward_scale^2)
/// rewards.
inline TabularChain random_chain(std::size_t states, int steps, Rng& rng, double reward_scale = 1.0) {
  TabularChain c;
  c.states = states;
  c.steps = steps;
  c.init = detail::random_simplex_point(states, rng);
  for (int t = 1; t < steps; ++t) {
    Matrix k(states, states);
    for (std::size_t s = 0; s < states; ++s) {
      const Vec row = detail::random_simplex_point(states, rng);
      std::copy(row.begin(), row.end(), k.row(s).begin());
    }
    c.kernels.push_back(std::move(k));
  }
  c.reward.resize(states);
  for (auto& r : c.reward) r = reward_scale * rng.normal();
  c.validate();
  return c;
}

/// Passive marginals m_1..m_T (index 0 holds m_1).
inline std::vector<Vec> passive_marginals(const TabularChain& chain) {
  std::vector<Vec> m{chain.init};
  for (int t = 1; t < chain.steps; ++t) {
    const Matrix& p = chain.kernel(t);
    Vec next(chain.states, 0.0);
    for (std::size_t s = 0; s < chain.states; ++s)
      for (std::size_t s2 = 0; s2 < chain.states; ++s2) next[s2] += m.back()[s] * p(s, s2);
    m.push_back(std::move(next));
  }
  return m;
}

}  // namespace diffcon
