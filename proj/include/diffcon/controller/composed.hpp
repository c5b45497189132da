#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffcon/controller/lora.hpp"
#include "diffcon/controller/side_net.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/diffusion/score_model.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

/// How the fine-tuned noise prediction is assembled from the frozen core.
///   graybox_gated:   eps0(x) + lambda s(mu0), s from the gated side net
///   graybox_ungated: eps0(x) + lambda net(x)
///   lora_only:       core with LoRA deltas merged into its dense layers
///   joint:           graybox_gated with the LoRA-adapted core in place of eps0
///   separate:        eps0(x) + (eps_lora(x) - eps0(x)) + lambda s(mu0), s against plain eps0
enum class Mode : std::uint32_t { graybox_gated = 0, graybox_ungated = 1, lora_only = 2, joint = 3, separate = 4 };

inline constexpr Mode kAllModes[] = {Mode::graybox_gated, Mode::graybox_ungated, Mode::lora_only, Mode::joint,
                                     Mode::separate};

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::graybox_gated: return "sidenet";
    case Mode::graybox_ungated: return "sidenet-np";
    case Mode::lora_only: return "lora";
    case Mode::joint: return "joint";
    case Mode::separate: return "separate";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : kAllModes)
    if (s == mode_name(m)) return m;
  throw ConfigError("unknown parameterization '" + std::string(s) +
                    "' (expected sidenet, sidenet-np, lora, joint or separate)");
}

inline bool mode_uses_lora(Mode m) { return m == Mode::lora_only || m == Mode::joint || m == Mode::separate; }
inline bool mode_uses_side(Mode m) { return m != Mode::lora_only; }
inline bool mode_is_graybox(Mode m) { return m == Mode::graybox_gated || m == Mode::graybox_ungated; }

struct ControllerSpec {
  std::size_t lora_rank = 16;
  double lora_scale = 1.0;
  std::size_t side_hidden = 64;
  std::size_t side_depth = 2;
  Activation side_activation = Activation::tanh;
};

namespace detail {

/// Adds d<up, model.predict(x, c, t)>/d(core params) into core_grad and
/// d/dx into x_grad (either may be empty). The condition table is frozen.
inline void core_backward(const ScoreModel& m, std::span<const double> x, int c, int t, std::span<const double> up,
                          std::span<double> core_grad, std::span<double> x_grad) {
  const Vec in = m.input(x, c, t);
  MlpTape tape;
  mlp_forward(m.core(), in, &tape);
  Vec in_grad(x_grad.empty() ? 0 : in.size(), 0.0);
  mlp_backward_accumulate(m.core(), tape, up, core_grad, in_grad);
  for (std::size_t j = 0; j < x_grad.size(); ++j) x_grad[j] += in_grad[j];
}

}  // namespace detail

/// Frozen pretrained score model plus optional LoRA adapters and side net.
/// Only adapter and side-net parameters are trainable; the pretrained core
/// is never modified.
class ComposedModel {
 public:
  ComposedModel(ScoreModel pretrained, NoiseSchedule sched, Mode mode, std::optional<LoraSet> lora,
                std::optional<SideNet> side, double lambda_model)
      : core_(std::move(pretrained)),
        sched_(std::move(sched)),
        mode_(mode),
        lora_(std::move(lora)),
        side_(std::move(side)),
        lambda_(lambda_model) {
    if (sched_.horizon() != core_.horizon()) throw ShapeError("ComposedModel: schedule horizon differs from model");
    if (!(lambda_ >= 0.0)) throw ConfigError("lambda_model must be non-negative");
    if (mode_uses_lora(mode_) != lora_.has_value()) throw ConfigError(std::string("mode ") + mode_name(mode_) + ": LoRA adapters missing or unexpected");
    if (mode_uses_side(mode_) != side_.has_value()) throw ConfigError(std::string("mode ") + mode_name(mode_) + ": side network missing or unexpected");
    if (side_) {
      const bool want_gated = mode_ != Mode::graybox_ungated;
      if (side_->dims().gated != want_gated) throw ConfigError(std::string("mode ") + mode_name(mode_) + ": wrong side network form");
      if (side_->dims().data_dim != core_.dim()) throw ShapeError("ComposedModel: side network dimension mismatch");
    }
    if (lora_) rebuild_adapted();
  }

  /// Fresh controller around `pretrained` with zero-initialized outputs.
  static ComposedModel make(const ScoreModel& pretrained, const NoiseSchedule& sched, Mode mode,
                            const ControllerSpec& spec, double lambda_model, Rng& rng) {
    std::optional<LoraSet> lora;
    std::optional<SideNet> side;
    if (mode_uses_lora(mode)) lora = LoraSet::make(pretrained.core(), spec.lora_rank, spec.lora_scale, rng);
    if (mode_uses_side(mode)) {
      const auto& cd = pretrained.dims();
      SideNetDims sd{cd.data_dim, cd.time_dim, cd.num_conditions, cd.cond_dim,
                     spec.side_hidden, spec.side_depth, spec.side_activation, mode != Mode::graybox_ungated};
      side = SideNet(sd, pretrained.horizon(), rng);
    }
    return ComposedModel(pretrained, sched, mode, std::move(lora), std::move(side), lambda_model);
  }

  Mode mode() const { return mode_; }
  std::size_t dim() const { return core_.dim(); }
  int horizon() const { return core_.horizon(); }
  const ScoreModel& pretrained() const { return core_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const std::optional<LoraSet>& lora() const { return lora_; }
  const std::optional<SideNet>& side() const { return side_; }
  double lambda_model() const { return lambda_; }
  void set_lambda_model(double l) {
    if (!(l >= 0.0)) throw ConfigError("lambda_model must be non-negative");
    lambda_ = l;
  }

  Vec predict(std::span<const double> x, int c, int t) const {
    switch (mode_) {
      case Mode::lora_only:
        return adapted_->predict(x, c, t);
      case Mode::graybox_ungated: {
        Vec e = core_.predict(x, c, t);
        if (lambda_ == 0.0) return e;
        const Vec s = side_->forward(x, c, t);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] += lambda_ * s[i];
        return e;
      }
      case Mode::graybox_gated:
      case Mode::joint: {
        const ScoreModel& base = mode_ == Mode::joint ? *adapted_ : core_;
        Vec e = base.predict(x, c, t);
        if (lambda_ == 0.0) return e;
        const Vec s = gated_correction(base, x, e, c, t);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] += lambda_ * s[i];
        return e;
      }
      case Mode::separate: {
        Vec e = core_.predict(x, c, t);
        const Vec el = adapted_->predict(x, c, t);
        const Vec s = lambda_ == 0.0 ? Vec{} : gated_correction(core_, x, e, c, t);
        for (std::size_t i = 0; i < e.size(); ++i) {
          e[i] += el[i] - e[i];
          if (!s.empty()) e[i] += lambda_ * s[i];
        }
        return e;
      }
    }
    throw ConfigError("unknown mode");
  }

  // Trainable parameters: LoRA adapters (if any), then the side network.
  std::size_t num_lora() const { return lora_ ? lora_->param_count() : 0; }
  std::size_t num_side() const { return side_ ? side_->param_count() : 0; }
  std::size_t num_trainable() const { return num_lora() + num_side(); }

  Vec trainable_params() const {
    Vec p = lora_ ? lora_->params() : Vec{};
    if (side_) {
      const Vec s = side_->params();
      p.insert(p.end(), s.begin(), s.end());
    }
    return p;
  }

  void set_trainable_params(std::span<const double> p) {
    if (p.size() != num_trainable()) throw ShapeError("ComposedModel: parameter count mismatch");
    if (lora_) {
      lora_->set_params(p.first(num_lora()));
      rebuild_adapted();
    }
    if (side_) side_->set_params(p.subspan(num_lora()));
  }

  /// Adds d<up, predict(x, c, t)>/d(trainable params) into `grad`.
  void backward(std::span<const double> x, int c, int t, std::span<const double> up, std::span<double> grad) const {
    if (grad.size() != num_trainable()) throw ShapeError("ComposedModel::backward: gradient length mismatch");
    require_same_size(x, up, "ComposedModel::backward");
    const std::size_t d = dim();
    std::span<double> g_lora = grad.first(num_lora());
    std::span<double> g_side = grad.subspan(num_lora());
    Vec merged_grad(lora_ ? core_.core().param_count() : 0, 0.0);

    switch (mode_) {
      case Mode::lora_only:
        detail::core_backward(*adapted_, x, c, t, up, merged_grad, {});
        break;
      case Mode::graybox_ungated: {
        if (lambda_ == 0.0) break;
        MlpTape tape;
        side_->forward(x, c, t, &tape);
        Vec su(up.begin(), up.end());
        for (auto& v : su) v *= lambda_;
        side_->backward(tape, c, su, g_side, {});
        break;
      }
      case Mode::graybox_gated:
      case Mode::separate: {
        if (mode_ == Mode::separate) detail::core_backward(*adapted_, x, c, t, up, merged_grad, {});
        if (lambda_ == 0.0) break;
        // Plain core: mu0 does not depend on trainable parameters.
        const Vec e = core_.predict(x, c, t);
        const Vec mu0 = reverse_mean(sched_, x, e, t);
        const Vec e_mu = core_.predict(mu0, c, t);
        MlpTape tape;
        const Vec out = side_->forward(mu0, c, t, &tape);
        Vec out_grad = gate_output_grad(mu0, e_mu, out, up, t);
        side_->backward(tape, c, out_grad, g_side, {});
        break;
      }
      case Mode::joint: {
        // eps = e1 + lambda s(mu0), e1 = eps_L(x), mu0 = x / sqrt(alpha) - c1 e1,
        // s uses e2 = eps_L(mu0) and the side net at mu0.
        const ScoreModel& base = *adapted_;
        Vec de1(up.begin(), up.end());
        if (lambda_ != 0.0) {
          const Vec e1 = base.predict(x, c, t);
          const Vec mu0 = reverse_mean(sched_, x, e1, t);
          const Vec e2 = base.predict(mu0, c, t);
          MlpTape tape;
          const Vec out = side_->forward(mu0, c, t, &tape);
          const double z = out[0];
          const double k = side_scale(sched_, t);
          Vec dmu(d, 0.0);
          Vec de2(d);
          for (std::size_t i = 0; i < d; ++i) {
            const double gs = lambda_ * up[i];
            de2[i] = -z * gs;
            dmu[i] += -k * z * gs;
          }
          const Vec out_grad = gate_output_grad(mu0, e2, out, up, t);
          side_->backward(tape, c, out_grad, g_side, dmu);
          detail::core_backward(base, mu0, c, t, de2, merged_grad, dmu);
          const double c1 = eps_coefficient(sched_, t);
          for (std::size_t i = 0; i < d; ++i) de1[i] += -c1 * dmu[i];
        }
        detail::core_backward(base, x, c, t, de1, merged_grad, {});
        break;
      }
    }
    if (lora_) lora_project_grad(core_.core(), *lora_, merged_grad, g_lora);
  }

 private:
  // Side correction of the gated forms, reading `base` at mu0.
  Vec gated_correction(const ScoreModel& base, std::span<const double> x, std::span<const double> e, int c,
                       int t) const {
    const Vec mu0 = reverse_mean(sched_, x, e, t);
    const Vec e_mu = base.predict(mu0, c, t);
    const Vec out = side_->forward(mu0, c, t);
    const std::span<const double> h(out.data() + 1, dim());
    return side_correction(sched_, e_mu, mu0, out[0], h, t);
  }

  // Gradient of <up, lambda s> with respect to the side-net output (z, h).
  Vec gate_output_grad(std::span<const double> mu0, std::span<const double> e_mu, std::span<const double> out,
                       std::span<const double> up, int t) const {
    const std::size_t d = dim();
    const double z = out[0];
    const double k = side_scale(sched_, t);
    const double sa = std::sqrt(sched_.alpha(t));
    Vec g(d + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      const double gs = lambda_ * up[i];
      const double h = out[1 + i];
      g[0] += gs * (-e_mu[i] - k * (mu0[i] - sa * h));
      g[1 + i] = -k * sa * (1.0 - z) * gs;
    }
    return g;
  }

  void rebuild_adapted() {
    adapted_.emplace(core_.dims(), core_.horizon(), merge_lora(core_.core(), *lora_), core_.conditions());
  }

  ScoreModel core_;
  NoiseSchedule sched_;
  Mode mode_;
  std::optional<LoraSet> lora_;
  std::optional<SideNet> side_;
  double lambda_;
  std::optional<ScoreModel> adapted_;
};

inline constexpr std::uint8_t kComposedFormatVersion = 2;
inline constexpr std::uint32_t kNoMode = 0xFFFFFFFFu;

namespace detail {

inline void write_container_header(ByteWriter& w, std::uint32_t mode, double lambda) {
  for (char ch : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u8(kComposedFormatVersion);
  w.u32(mode);
  w.f64(lambda);
}

}  // namespace detail

/// Pretrained checkpoint: container header with no mode, then a CORE section.
inline std::vector<std::uint8_t> serialize_pretrained(const ScoreModel& m) {
  ByteWriter w;
  detail::write_container_header(w, kNoMode, 0.0);
  w.tag("CORE");
  write_score_model(w, m);
  w.tag("END!");
  return w.take();
}

/// Fine-tuned checkpoint: header with mode and lambda_model, then CORE and
/// the LORA / SIDE sections the mode uses.
inline std::vector<std::uint8_t> serialize_composed(const ComposedModel& m) {
  ByteWriter w;
  detail::write_container_header(w, static_cast<std::uint32_t>(m.mode()), m.lambda_model());
  w.tag("CORE");
  write_score_model(w, m.pretrained());
  if (m.lora()) {
    w.tag("LORA");
    write_lora(w, *m.lora());
  }
  if (m.side()) {
    w.tag("SIDE");
    write_side_net(w, *m.side());
  }
  w.tag("END!");
  return w.take();
}

struct CheckpointContents {
  std::optional<Mode> mode;
  double lambda_model = 0.0;
  ScoreModel core;
  std::optional<LoraSet> lora;
  std::optional<SideNet> side;
};

inline CheckpointContents parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  for (char ch : kCheckpointMagic)
    if (r.u8() != static_cast<std::uint8_t>(ch)) throw ParseError("not a checkpoint (bad magic)");
  const auto version = r.u8();
  if (version != kComposedFormatVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  CheckpointContents out;
  const std::uint32_t mode = r.u32();
  if (mode != kNoMode) {
    if (mode > static_cast<std::uint32_t>(Mode::separate)) throw ParseError("checkpoint names an unknown mode");
    out.mode = static_cast<Mode>(mode);
  }
  out.lambda_model = r.f64();
  bool have_core = false;
  for (;;) {
    const std::string tag = r.tag();
    if (tag == "END!") break;
    if (tag == "CORE") {
      out.core = read_score_model(r);
      have_core = true;
    } else if (tag == "LORA") {
      out.lora = read_lora(r);
    } else if (tag == "SIDE") {
      out.side = read_side_net(r);
    } else {
      throw ParseError("unknown checkpoint section '" + tag + "'");
    }
  }
  if (!have_core) throw ParseError("checkpoint has no CORE section");
  if (!r.done()) throw ParseError("trailing bytes after checkpoint end marker");
  return out;
}

inline ScoreModel deserialize_pretrained(std::span<const std::uint8_t> bytes) {
  return parse_checkpoint(bytes).core;
}

inline ComposedModel deserialize_composed(std::span<const std::uint8_t> bytes, const NoiseSchedule& sched) {
  auto c = parse_checkpoint(bytes);
  if (!c.mode) throw ParseError("checkpoint holds only a pretrained model");
  return ComposedModel(std::move(c.core), sched, *c.mode, std::move(c.lora), std::move(c.side), c.lambda_model);
}

}  // namespace diffcon
