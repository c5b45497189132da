#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "diffcon/diffusion/score_model.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/numkit/mlp.hpp"
#include "diffcon/rng.hpp"
#include "diffcon/schedule.hpp"

namespace diffcon {

struct SideNetDims {
  std::size_t data_dim = 1;
  std::size_t time_dim = 8;
  std::size_t num_conditions = 0;
  std::size_t cond_dim = 4;
  std::size_t hidden = 64;
  std::size_t depth = 2;
  Activation activation = Activation::tanh;
  bool gated = true;  // gated: outputs (z, h); ungated: a d-vector correction

  std::size_t input_dim() const { return data_dim + time_dim + cond_dim; }
  std::size_t output_dim() const { return gated ? data_dim + 1 : data_dim; }
};

/// Controller network over concat(x, time_embed(t), condition row) with its
/// own condition table. In gated form output[0] is the gate z and
/// output[1..d] is h; the two heads share the trunk and both start at zero.
class SideNet {
 public:
  SideNet() = default;

  SideNet(const SideNetDims& dims, int horizon, Rng& rng) : dims_(dims), horizon_(horizon) {
    std::vector<std::size_t> sizes{dims.input_dim()};
    for (std::size_t k = 0; k < dims.depth; ++k) sizes.push_back(dims.hidden);
    sizes.push_back(dims.output_dim());
    net_ = Mlp::make(sizes, dims.activation, rng, /*zero_last=*/true);
    table_ = ConditionTable(dims.num_conditions, dims.cond_dim, rng);
  }

  SideNet(const SideNetDims& dims, int horizon, Mlp net, ConditionTable table)
      : dims_(dims), horizon_(horizon), net_(std::move(net)), table_(std::move(table)) {
    if (net_.in_dim() != dims_.input_dim() || net_.out_dim() != dims_.output_dim())
      throw ShapeError("SideNet: network dimensions do not match layout");
    if (table_.rows.cols != dims_.cond_dim || table_.num_conditions() != dims_.num_conditions)
      throw ShapeError("SideNet: condition table shape mismatch");
  }

  const SideNetDims& dims() const { return dims_; }
  int horizon() const { return horizon_; }
  const Mlp& net() const { return net_; }
  const ConditionTable& conditions() const { return table_; }

  Vec input(std::span<const double> x, int c, int t) const {
    if (x.size() != dims_.data_dim) throw ShapeError("SideNet: state dimension mismatch");
    return conditioned_input(x, t, horizon_, dims_.time_dim, table_, c);
  }

  Vec forward(std::span<const double> x, int c, int t, MlpTape* tape = nullptr) const {
    return mlp_forward(net_, input(x, c, t), tape);
  }

  std::size_t param_count() const { return net_.param_count() + table_.rows.data.size(); }

  Vec params() const {
    Vec p = net_.params();
    p.insert(p.end(), table_.rows.data.begin(), table_.rows.data.end());
    return p;
  }

  void set_params(std::span<const double> p) {
    if (p.size() != param_count()) throw ShapeError("SideNet: parameter count mismatch");
    const std::size_t n = net_.param_count();
    net_.set_params(p.first(n));
    std::copy(p.begin() + n, p.end(), table_.rows.data.begin());
  }

  /// Adds d<upstream, forward>/d(params) into `grad` and d/dx into `x_grad`
  /// (may be empty). `tape` must come from forward() at the same arguments.
  void backward(const MlpTape& tape, int c, std::span<const double> upstream, std::span<double> grad,
                std::span<double> x_grad) const {
    if (grad.size() != param_count()) throw ShapeError("SideNet::backward: gradient length mismatch");
    Vec in_grad(net_.in_dim(), 0.0);
    const std::size_t n = net_.param_count();
    mlp_backward_accumulate(net_, tape, upstream, grad.first(n), in_grad);
    const std::size_t off = dims_.data_dim + dims_.time_dim;
    double* g = grad.data() + n + table_.row_of(c) * dims_.cond_dim;
    for (std::size_t j = 0; j < dims_.cond_dim; ++j) g[j] += in_grad[off + j];
    for (std::size_t j = 0; j < x_grad.size(); ++j) x_grad[j] += in_grad[j];
  }

 private:
  SideNetDims dims_;
  int horizon_ = 0;
  Mlp net_;
  ConditionTable table_;
};

/// k_t = sqrt(1 - abar_t) / beta_t, the factor in front of the x and h terms.
inline double side_scale(const NoiseSchedule& sched, int t) {
  return std::sqrt(1.0 - sched.alpha_bar(t)) / sched.beta(t);
}

/// s = -z eps0 - k_t (z x + sqrt(alpha_t) (1 - z) h), evaluated with x = mu0.
inline Vec side_correction(const NoiseSchedule& sched, std::span<const double> eps0_at_mu0,
                           std::span<const double> mu0, double z, std::span<const double> h, int t) {
  require_same_size(eps0_at_mu0, mu0, "side_correction");
  require_same_size(mu0, h, "side_correction");
  const double k = side_scale(sched, t);
  const double sa = std::sqrt(sched.alpha(t));
  Vec s(mu0.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = -z * eps0_at_mu0[i] - k * (z * mu0[i] + sa * (1.0 - z) * h[i]);
  return s;
}

inline void write_side_net(ByteWriter& w, const SideNet& s) {
  const auto& d = s.dims();
  w.u32(d.gated ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(s.horizon()));
  w.u32(static_cast<std::uint32_t>(d.data_dim));
  w.u32(static_cast<std::uint32_t>(d.time_dim));
  w.u32(static_cast<std::uint32_t>(d.num_conditions));
  w.u32(static_cast<std::uint32_t>(d.cond_dim));
  w.f64s(s.conditions().rows.data);
  write_mlp(w, s.net());
}

inline SideNet read_side_net(ByteReader& r) {
  SideNetDims d;
  d.gated = r.u32() != 0;
  const int horizon = static_cast<int>(r.u32());
  d.data_dim = r.u32();
  d.time_dim = r.u32();
  d.num_conditions = r.u32();
  d.cond_dim = r.u32();
  ConditionTable table;
  table.rows = Matrix(d.num_conditions + 1, d.cond_dim);
  r.f64s(table.rows.data);
  Mlp net = read_mlp(r);
  d.depth = net.depth() - 1;
  d.hidden = net.depth() > 1 ? net.layers().front().out_dim() : 0;
  d.activation = net.depth() > 1 ? net.layers().front().act : Activation::identity;
  return SideNet(d, horizon, std::move(net), std::move(table));
}

}  // namespace diffcon
