#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "diffcon/diffusion/data.hpp"
#include "diffcon/diffusion/loss.hpp"
#include "diffcon/diffusion/score_model.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/numkit/adam.hpp"
#include "diffcon/rng.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// One training-log row. Columns without a meaning for a run (reward and KL
/// during pretraining) are 0; wallclock_ms is 0 unless timing is enabled.
struct LogRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double wallclock_ms = 0.0;
};

struct PretrainOptions {
  std::size_t iterations = 2000;
  std::size_t batch = 128;
  double lr = 1e-3;
  double p_drop = 0.1;
  bool time_log = false;
  std::optional<double> lr_final;  // cosine decay from lr to lr_final when set
};

/// Learning rate at iteration `it` of `total` under optional cosine decay.
inline double cosine_lr(double lr, std::optional<double> lr_final, std::size_t it, std::size_t total) {
  if (!lr_final || total <= 1) return lr;
  const double frac = static_cast<double>(it) / static_cast<double>(total - 1);
  return *lr_final + 0.5 * (lr - *lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
}

/// Milliseconds since `start`, or 0 when timing is disabled (keeps logs
/// byte-reproducible).
inline double elapsed_ms(std::chrono::steady_clock::time_point start, bool enabled) {
  if (!enabled) return 0.0;
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

/// Adam on the score-matching loss over fresh data batches.
inline std::vector<LogRow> pretrain(ScoreModel& model, const NoiseSchedule& sched, const DataSpec& data,
                                    const PretrainOptions& opt, Rng& rng) {
  data.validate();
  if (data.dim != model.dim()) throw ShapeError("pretrain: data dimension differs from model");
  if (opt.iterations > 0 && opt.batch == 0) throw ConfigError("pretrain: batch size must be positive");
  const double p_drop = data.num_conditions() > 0 ? opt.p_drop : 0.0;
  AdamState adam = AdamState::for_size(model.num_trainable(), opt.lr);
  Vec params = model.trainable_params();
  std::vector<LogRow> log;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    adam.lr = cosine_lr(opt.lr, opt.lr_final, it, opt.iterations);
    const auto batch = data.sample_batch(opt.batch, rng);
    const LossResult r = sm_loss(model, sched, batch, p_drop, rng);
    if (!std::isfinite(r.loss)) throw NumericError("pretrain: non-finite loss at iteration " + std::to_string(it));
    adam_step(adam, params, r.grad);
    model.set_trainable_params(params);
    log.push_back({it, r.loss, 0.0, 0.0, elapsed_ms(start, opt.time_log)});
  }
  return log;
}

}  // namespace diffcon
