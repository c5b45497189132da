#pragma once

#include <concepts>
#include <span>

#include "diffcon/numkit/matrix.hpp"

namespace diffcon {

/// Condition index of the null (unconditional) token.
inline constexpr int kNullCondition = -1;

/// Anything that predicts the injected noise eps(x_t, c, t).
template <class M>
concept NoisePredictor = requires(const M& m, std::span<const double> x, int c, int t) {
  { m.predict(x, c, t) } -> std::convertible_to<Vec>;
  { m.dim() } -> std::convertible_to<std::size_t>;
};

/// A noise predictor with a flat vector of trainable parameters.
/// `backward` adds d<upstream, predict(x, c, t)>/d(params) into `grad`.
template <class M>
concept TrainablePredictor =
    NoisePredictor<M> && requires(const M& m, M& mut, std::span<const double> x, int c, int t,
                                  std::span<const double> up, std::span<double> grad, std::span<const double> p) {
      m.backward(x, c, t, up, grad);
      { m.num_trainable() } -> std::convertible_to<std::size_t>;
      { m.trainable_params() } -> std::convertible_to<Vec>;
      mut.set_trainable_params(p);
    };

}  // namespace diffcon
