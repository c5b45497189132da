#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "diffcon/controller/composed.hpp"
#include "diffcon/diffusion/data.hpp"
#include "diffcon/diffusion/loss.hpp"
#include "diffcon/diffusion/train.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/numkit/adam.hpp"
#include "diffcon/rlft/advantage.hpp"
#include "diffcon/rlft/policy_gradient.hpp"
#include "diffcon/rlft/reward.hpp"
#include "diffcon/rlft/rollout.hpp"
#include "diffcon/rlft/rwl.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

enum class Algorithm { sft, rwl, pg, ppo };

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::sft: return "sft";
    case Algorithm::rwl: return "rwl";
    case Algorithm::pg: return "pg";
    case Algorithm::ppo: return "ppo";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "sft") return Algorithm::sft;
  if (s == "rwl") return Algorithm::rwl;
  if (s == "pg") return Algorithm::pg;
  if (s == "ppo") return Algorithm::ppo;
  throw ConfigError("unknown algorithm '" + s + "' (expected sft, rwl, pg or ppo)");
}

/// Where RWL gets its behavior samples: fresh draws from the current model at
/// every sampling round, one fixed pool drawn from the pretrained model, or
/// one fixed pool drawn from the pretraining data (the distribution the
/// pretrained model approximates, without its sampler bias).
enum class RwlSource { online, pretrained, data };

inline RwlSource parse_rwl_source(const std::string& s) {
  if (s == "online") return RwlSource::online;
  if (s == "pretrained") return RwlSource::pretrained;
  if (s == "data") return RwlSource::data;
  throw ConfigError("unknown rwl_source '" + s + "' (expected online, pretrained or data)");
}

inline const char* rwl_source_name(RwlSource s) {
  switch (s) {
    case RwlSource::online: return "online";
    case RwlSource::pretrained: return "pretrained";
    case RwlSource::data: return "data";
  }
  return "online";
}

struct FinetuneOptions {
  Algorithm algorithm = Algorithm::rwl;
  double tau = 1e-4;  // regularization temperature for pg / ppo
  FDiv fd = FDiv::kl();
  WeightSpec weights;
  BaselineMode baseline_mode = BaselineMode::first_batch_mean;
  double baseline = 0.0;  // used by BaselineMode::fixed
  RwlSource rwl_source = RwlSource::online;
  std::size_t rwl_pool = 4096;
  double lambda_cfg = 7.5;
  bool rollout_cfg = false;
  double p_drop = 0.1;
  double clip_delta = 0.2;
  double lr_side = 1e-5;
  double lr_lora = 1e-4;
  double lr_decay = 1.0;  // final / initial learning rate under cosine decay; 1 keeps it constant
  std::size_t batch = 64;
  std::size_t iterations = 100;
  std::size_t sample_every = 2;
  bool reuse_noise = false;
  std::size_t monitor_every = 10;
  std::size_t monitor_batch = 64;
  bool time_log = false;
};

/// Adam with separate learning rates for the LoRA block and the side-net
/// block of a ComposedModel's trainable vector.
class ControllerOptimizer {
 public:
  ControllerOptimizer(const ComposedModel& m, double lr_lora, double lr_side)
      : n_lora_(m.num_lora()),
        lora_(AdamState::for_size(m.num_lora(), lr_lora)),
        side_(AdamState::for_size(m.num_side(), lr_side)),
        base_lora_(lr_lora),
        base_side_(lr_side) {}

  /// Scales both groups' base rates (used for learning-rate decay).
  void set_scale(double s) {
    lora_.lr = base_lora_ * s;
    side_.lr = base_side_ * s;
  }

  void step(ComposedModel& m, std::span<const double> grad) {
    Vec p = m.trainable_params();
    std::span<double> ps(p);
    if (n_lora_ > 0) adam_step(lora_, ps.first(n_lora_), grad.first(n_lora_));
    if (ps.size() > n_lora_) adam_step(side_, ps.subspan(n_lora_), grad.subspan(n_lora_));
    m.set_trainable_params(p);
  }

 private:
  std::size_t n_lora_;
  AdamState lora_;
  AdamState side_;
  double base_lora_;
  double base_side_;
};

namespace detail {

inline std::vector<Sample> terminal_samples(const RolloutBatch& b) {
  std::vector<Sample> out;
  out.reserve(b.size());
  for (const auto& tr : b.trajectories) out.push_back({tr.terminal(), tr.c});
  return out;
}

inline Vec batch_rewards(const RolloutBatch& b) {
  Vec r;
  r.reserve(b.size());
  for (const auto& tr : b.trajectories) r.push_back(tr.reward);
  return r;
}

inline void require_finite_loss(double loss, std::size_t it) {
  if (!std::isfinite(loss)) throw NumericError("fine-tuning diverged: non-finite loss at iteration " + std::to_string(it));
}

/// Training loop for one ComposedModel (any mode except the two-phase
/// separate schedule, which finetune() splits up).
class FinetuneRun {
 public:
  FinetuneRun(ComposedModel& model, const RewardSpec& reward, const DataSpec& data, const FinetuneOptions& opt,
              const std::vector<Sample>* sft_targets, Rng& rng, std::size_t iter_offset)
      : m_(model),
        sched_(model.schedule()),
        reward_(reward),
        data_(data),
        opt_(opt),
        targets_(sft_targets),
        rng_(rng),
        iter_offset_(iter_offset),
        optimizer_(model, opt.lr_lora, opt.lr_side) {
    c_sampler_ = [this](Rng& r) { return data_.sample_condition(r); };
    ropt_.lambda_cfg = opt.rollout_cfg ? opt.lambda_cfg : 0.0;
    p_drop_ = data.num_conditions() > 0 ? opt.p_drop : 0.0;
  }

  std::vector<LogRow> run() {
    validate();
    std::vector<LogRow> log;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t it = 0; it < opt_.iterations; ++it) {
      optimizer_.set_scale(cosine_lr(1.0, opt_.lr_decay, it, opt_.iterations));
      const double loss = iteration(it);
      require_finite_loss(loss, it + iter_offset_);
      log.push_back({it + iter_offset_, loss, mean_reward_, mean_kl_, elapsed_ms(start, opt_.time_log)});
    }
    return log;
  }

 private:
  void validate() const {
    if (opt_.batch == 0) throw ConfigError("fine-tuning batch size must be positive");
    if (opt_.sample_every == 0) throw ConfigError("sample_every must be at least 1");
    if ((opt_.algorithm == Algorithm::pg || opt_.algorithm == Algorithm::ppo) && opt_.fd.kind() != FDiv::Kind::kl &&
        opt_.tau != 0.0)
      throw ConfigError("neural policy-gradient runs support only the KL regularizer");
    if (opt_.algorithm == Algorithm::sft && (!targets_ || targets_->empty()))
      throw ConfigError("sft needs target samples");
    if (opt_.algorithm == Algorithm::rwl && opt_.rwl_source != RwlSource::online && opt_.rwl_pool == 0)
      throw ConfigError("rwl_pool must be positive for pooled RWL");
  }

  RolloutBatch roll(std::size_t n) {
    return rollout(m_, m_.pretrained(), sched_, reward_, c_sampler_, n, rng_, ropt_);
  }

  void observe(const RolloutBatch& b) {
    mean_reward_ = b.mean_reward();
    mean_kl_ = mean_path_kl(b, sched_);
  }

  void maybe_monitor(std::size_t it) {
    if (opt_.monitor_every == 0) return;
    if (it % opt_.monitor_every == 0 || it + 1 == opt_.iterations) observe(roll(opt_.monitor_batch));
  }

  std::vector<Sample> minibatch(const std::vector<Sample>& pool, Vec* w_out, const Vec* w_pool) {
    std::vector<Sample> b;
    b.reserve(opt_.batch);
    if (w_out) w_out->clear();
    for (std::size_t i = 0; i < opt_.batch; ++i) {
      const auto k = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(pool.size()) - 1));
      b.push_back(pool[k]);
      if (w_out) w_out->push_back((*w_pool)[k]);
    }
    return b;
  }

  Vec weights_for(std::span<const double> rewards) {
    if (opt_.weights.family == WeightFamily::exponential) return stabilized_exponential_weights(rewards, opt_.weights.tau);
    if (opt_.baseline_mode == BaselineMode::exact_bisection)
      return rwl_weights(rewards, opt_.weights, resolve_baseline(opt_.baseline_mode, rewards, opt_.weights));
    if (!baseline_) baseline_ = resolve_baseline(opt_.baseline_mode, rewards, opt_.weights, opt_.baseline);
    return rwl_weights(rewards, opt_.weights, *baseline_);
  }

  void fill_pool() {
    if (opt_.rwl_source == RwlSource::pretrained) {
      const RolloutBatch pb =
          rollout(m_.pretrained(), m_.pretrained(), sched_, reward_, c_sampler_, opt_.rwl_pool, rng_, ropt_);
      pool_ = terminal_samples(pb);
      pool_weights_ = weights_for(batch_rewards(pb));
      return;
    }
    pool_ = data_.sample_batch(opt_.rwl_pool, rng_);
    Vec rewards;
    for (const auto& s : pool_) rewards.push_back(reward_(s.x, s.c));
    pool_weights_ = weights_for(rewards);
  }

  double return_baseline(const RolloutBatch& b) {
    if (opt_.baseline_mode == BaselineMode::fixed) return opt_.baseline;
    if (opt_.baseline_mode == BaselineMode::exact_bisection)
      throw ConfigError("exact-bisection baselines apply to reward weights, not policy-gradient returns");
    if (!baseline_) {
      double s = 0.0;
      for (const auto& tr : b.trajectories) s += soft_return(tr.reward, trajectory_log_ratios(tr), opt_.tau, opt_.fd);
      baseline_ = s / static_cast<double>(b.size());
    }
    return *baseline_;
  }

  double iteration(std::size_t it) {
    const bool sampling_round = it % opt_.sample_every == 0;
    LossResult r;
    switch (opt_.algorithm) {
      case Algorithm::sft: {
        const auto b = minibatch(*targets_, nullptr, nullptr);
        r = sm_loss(m_, sched_, b, p_drop_, rng_);
        maybe_monitor(it);
        break;
      }
      case Algorithm::rwl: {
        if (opt_.rwl_source != RwlSource::online) {
          if (pool_.empty()) fill_pool();
          Vec w;
          const auto b = minibatch(pool_, &w, &pool_weights_);
          r = rwl_loss(m_, sched_, b, w, rng_, p_drop_);
          maybe_monitor(it);
        } else {
          if (sampling_round) {
            const RolloutBatch rb = roll(opt_.batch);
            observe(rb);
            samples_ = terminal_samples(rb);
            sample_weights_ = weights_for(batch_rewards(rb));
            draws_.clear();
          }
          if (opt_.reuse_noise) {
            if (draws_.empty()) draws_ = draw_loss_noise(sched_, samples_.size(), m_.dim(), p_drop_, rng_);
            r = weighted_sm_loss(m_, sched_, samples_, draws_, sample_weights_);
          } else {
            r = rwl_loss(m_, sched_, samples_, sample_weights_, rng_, p_drop_);
          }
        }
        break;
      }
      case Algorithm::pg: {
        const RolloutBatch rb = roll(opt_.batch);
        observe(rb);
        const auto adv = soft_advantage_mc(rb, opt_.tau, opt_.fd, return_baseline(rb));
        r = pg_loss(m_, sched_, rb, adv, ropt_.lambda_cfg);
        break;
      }
      case Algorithm::ppo: {
        if (sampling_round) {
          ppo_batch_ = roll(opt_.batch);
          observe(ppo_batch_);
          ppo_old_ = behavior_logps(ppo_batch_);
          ppo_adv_ = soft_advantage_mc(ppo_batch_, opt_.tau, opt_.fd, return_baseline(ppo_batch_));
        }
        r = ppo_loss(m_, sched_, ppo_batch_, ppo_old_, ppo_adv_, opt_.clip_delta, ropt_.lambda_cfg);
        break;
      }
    }
    optimizer_.step(m_, r.grad);
    return r.loss;
  }

  ComposedModel& m_;
  const NoiseSchedule& sched_;
  const RewardSpec& reward_;
  const DataSpec& data_;
  const FinetuneOptions& opt_;
  const std::vector<Sample>* targets_;
  Rng& rng_;
  std::size_t iter_offset_;
  ControllerOptimizer optimizer_;
  ConditionSampler c_sampler_;
  RolloutOptions ropt_;
  double p_drop_ = 0.0;
  double mean_reward_ = 0.0;
  double mean_kl_ = 0.0;
  std::optional<double> baseline_;
  std::vector<Sample> pool_;
  Vec pool_weights_;
  std::vector<Sample> samples_;
  Vec sample_weights_;
  std::vector<LossDraw> draws_;
  RolloutBatch ppo_batch_;
  std::vector<Vec> ppo_old_;
  AdvantageEstimate ppo_adv_;
};

}  // namespace detail

/// Fine-tunes the controller parameters of `model` in place and returns the
/// per-iteration log. In separate mode the LoRA adapters and the side net
/// are trained in two independent runs of `iterations` each (LoRA first,
/// then the side net against the plain pretrained model) and then combined.
inline std::vector<LogRow> finetune(ComposedModel& model, const RewardSpec& reward, const DataSpec& data,
                                    const FinetuneOptions& opt, Rng& rng,
                                    const std::vector<Sample>* sft_targets = nullptr) {
  reward.validate(model.dim());
  if (model.mode() != Mode::separate) return detail::FinetuneRun(model, reward, data, opt, sft_targets, rng, 0).run();

  ComposedModel lora_part(model.pretrained(), model.schedule(), Mode::lora_only, model.lora(), std::nullopt, 0.0);
  ComposedModel side_part(model.pretrained(), model.schedule(), Mode::graybox_gated, std::nullopt, model.side(),
                          model.lambda_model());
  auto log = detail::FinetuneRun(lora_part, reward, data, opt, sft_targets, rng, 0).run();
  const auto log2 = detail::FinetuneRun(side_part, reward, data, opt, sft_targets, rng, opt.iterations).run();
  log.insert(log.end(), log2.begin(), log2.end());
  model = ComposedModel(model.pretrained(), model.schedule(), Mode::separate, lora_part.lora(), side_part.side(),
                        model.lambda_model());
  return log;
}

/// Adam over sm_loss on target samples, all trainable parameters sharing
/// one learning rate.
template <TrainablePredictor M>
void sft_finetune(M& model, const NoiseSchedule& sched, std::span<const Sample> targets, std::size_t steps, double lr,
                  double p_drop, std::size_t batch, Rng& rng) {
  if (steps == 0) return;
  if (targets.empty()) throw ConfigError("sft_finetune: no target samples");
  AdamState adam = AdamState::for_size(model.num_trainable(), lr);
  Vec params = model.trainable_params();
  std::vector<Sample> b(batch);
  for (std::size_t it = 0; it < steps; ++it) {
    for (auto& s : b) s = targets[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(targets.size()) - 1))];
    const LossResult r = sm_loss(model, sched, b, p_drop, rng);
    detail::require_finite_loss(r.loss, it);
    adam_step(adam, params, r.grad);
    model.set_trainable_params(params);
  }
}

}  // namespace diffcon
