#pragma once

#include <span>
#include <vector>

#include "diffcon/diffusion/data.hpp"
#include "diffcon/diffusion/model.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/parallel.hpp"
#include "diffcon/rng.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// Per-example randomness of the score-matching loss.
struct LossDraw {
  int t = 1;
  Vec xi;
  bool drop = false;  // condition replaced by the null token
};

struct LossResult {
  double loss = 0.0;
  Vec grad;
};

/// t ~ Uniform{1..T-1}, xi ~ N(0, I), drop ~ Bernoulli(p_drop), one per example.
inline std::vector<LossDraw> draw_loss_noise(const NoiseSchedule& sched, std::size_t n, std::size_t dim,
                                             double p_drop, Rng& rng) {
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must lie in [0, 1)");
  std::vector<LossDraw> draws(n);
  for (auto& d : draws) {
    d.t = rng.uniform_int(1, sched.horizon() - 1);
    d.xi = rng.normal_vector(dim);
    d.drop = p_drop > 0.0 && rng.uniform() < p_drop;
  }
  return draws;
}

/// (1/n) sum_i w_i * 0.5 ||xi_i - eps(q_sample(x_i, t_i, xi_i), c_i, t_i)||^2
/// and its gradient with respect to the model's trainable parameters.
/// Empty `weights` means all ones.
template <TrainablePredictor M>
LossResult weighted_sm_loss(const M& model, const NoiseSchedule& sched, std::span<const Sample> batch,
                            std::span<const LossDraw> draws, std::span<const double> weights = {}) {
  if (batch.empty()) throw ShapeError("score-matching loss: empty batch");
  if (draws.size() != batch.size()) throw ShapeError("score-matching loss: draw count mismatch");
  if (!weights.empty() && weights.size() != batch.size()) throw ShapeError("score-matching loss: weight count mismatch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossResult out{0.0, Vec(model.num_trainable(), 0.0)};
  out.loss = chunked_sum(batch.size(), out.grad.size(), out.grad, [&](std::size_t i, std::span<double> acc) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) return 0.0;
    const LossDraw& d = draws[i];
    const int c = d.drop ? kNullCondition : batch[i].c;
    const Vec xt = q_sample(sched, batch[i].x, d.t, d.xi);
    const Vec eps = model.predict(xt, c, d.t);
    Vec up(eps.size());
    double sq = 0.0;
    for (std::size_t j = 0; j < eps.size(); ++j) {
      const double r = eps[j] - d.xi[j];
      sq += r * r;
      up[j] = w * inv_n * r;
    }
    model.backward(xt, c, d.t, up, acc);
    return 0.5 * w * inv_n * sq;
  });
  return out;
}

/// Score-matching loss with fresh per-example draws from `rng`.
template <TrainablePredictor M>
LossResult sm_loss(const M& model, const NoiseSchedule& sched, std::span<const Sample> batch, double p_drop,
                   Rng& rng) {
  if (batch.empty()) throw ShapeError("score-matching loss: empty batch");
  const auto draws = draw_loss_noise(sched, batch.size(), model.dim(), p_drop, rng);
  return weighted_sm_loss(model, sched, batch, draws);
}

}  // namespace diffcon
