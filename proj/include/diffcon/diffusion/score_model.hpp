#pragma once

#include <span>
#include <string>
#include <vector>

#include "diffcon/diffusion/model.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/numkit/embedding.hpp"
#include "diffcon/numkit/mlp.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

struct ScoreModelDims {
  std::size_t data_dim = 1;
  std::size_t time_dim = 8;
  std::size_t num_conditions = 0;  // real conditions 0..n-1; the null token is extra
  std::size_t cond_dim = 4;
  std::size_t hidden = 64;
  std::size_t depth = 2;  // hidden layers
  Activation activation = Activation::tanh;

  std::size_t input_dim() const { return data_dim + time_dim + cond_dim; }
};

/// Learnable condition table: one row per real condition plus a final row
/// for the null token.
struct ConditionTable {
  Matrix rows;

  ConditionTable() = default;
  ConditionTable(std::size_t num_conditions, std::size_t dim, Rng& rng) : rows(num_conditions + 1, dim) {
    for (auto& v : rows.data) v = rng.normal();
  }

  std::size_t num_conditions() const { return rows.rows - 1; }

  std::size_t row_of(int c) const {
    if (c == kNullCondition) return rows.rows - 1;
    if (c < 0 || static_cast<std::size_t>(c) >= num_conditions())
      throw RangeError("condition " + std::to_string(c) + " outside vocabulary");
    return static_cast<std::size_t>(c);
  }
};

/// Assembles concat(x, time_embed(t), cond_row(c)).
inline Vec conditioned_input(std::span<const double> x, int t, int horizon, std::size_t time_dim,
                             const ConditionTable& table, int c) {
  Vec in;
  in.reserve(x.size() + time_dim + table.rows.cols);
  in.insert(in.end(), x.begin(), x.end());
  const Vec te = time_embed(t, time_dim, horizon);
  in.insert(in.end(), te.begin(), te.end());
  const auto row = table.rows.row(table.row_of(c));
  in.insert(in.end(), row.begin(), row.end());
  return in;
}

/// Noise-prediction network eps_theta(x_t, c, t): an Mlp over
/// concat(x_t, time_embed(t), condition row).
class ScoreModel {
 public:
  ScoreModel() = default;

  ScoreModel(const ScoreModelDims& dims, int horizon, Rng& rng) : dims_(dims), horizon_(horizon) {
    std::vector<std::size_t> sizes{dims.input_dim()};
    for (std::size_t k = 0; k < dims.depth; ++k) sizes.push_back(dims.hidden);
    sizes.push_back(dims.data_dim);
    core_ = Mlp::make(sizes, dims.activation, rng);
    table_ = ConditionTable(dims.num_conditions, dims.cond_dim, rng);
  }

  ScoreModel(const ScoreModelDims& dims, int horizon, Mlp core, ConditionTable table)
      : dims_(dims), horizon_(horizon), core_(std::move(core)), table_(std::move(table)) {
    if (core_.in_dim() != dims_.input_dim() || core_.out_dim() != dims_.data_dim)
      throw ShapeError("ScoreModel: core dimensions do not match layout");
    if (table_.rows.cols != dims_.cond_dim || table_.num_conditions() != dims_.num_conditions)
      throw ShapeError("ScoreModel: condition table shape mismatch");
  }

  std::size_t dim() const { return dims_.data_dim; }
  int horizon() const { return horizon_; }
  const ScoreModelDims& dims() const { return dims_; }
  const Mlp& core() const { return core_; }
  const ConditionTable& conditions() const { return table_; }

  Vec input(std::span<const double> x, int c, int t) const {
    if (x.size() != dims_.data_dim) throw ShapeError("ScoreModel: state dimension mismatch");
    return conditioned_input(x, t, horizon_, dims_.time_dim, table_, c);
  }

  Vec predict(std::span<const double> x, int c, int t) const { return mlp_forward(core_, input(x, c, t)); }

  // Trainable parameters: core Mlp, then the condition table.
  std::size_t num_trainable() const { return core_.param_count() + table_.rows.data.size(); }

  Vec trainable_params() const {
    Vec p = core_.params();
    p.insert(p.end(), table_.rows.data.begin(), table_.rows.data.end());
    return p;
  }

  void set_trainable_params(std::span<const double> p) {
    if (p.size() != num_trainable()) throw ShapeError("ScoreModel: parameter count mismatch");
    const std::size_t nc = core_.param_count();
    core_.set_params(p.first(nc));
    std::copy(p.begin() + nc, p.end(), table_.rows.data.begin());
  }

  void backward(std::span<const double> x, int c, int t, std::span<const double> upstream,
                std::span<double> grad) const {
    if (grad.size() != num_trainable()) throw ShapeError("ScoreModel::backward: gradient length mismatch");
    const Vec in = input(x, c, t);
    MlpTape tape;
    mlp_forward(core_, in, &tape);
    Vec in_grad(in.size(), 0.0);
    const std::size_t nc = core_.param_count();
    mlp_backward_accumulate(core_, tape, upstream, grad.first(nc), in_grad);
    const std::size_t row = table_.row_of(c);
    const std::size_t off = dims_.data_dim + dims_.time_dim;
    double* g = grad.data() + nc + row * dims_.cond_dim;
    for (std::size_t j = 0; j < dims_.cond_dim; ++j) g[j] += in_grad[off + j];
  }

 private:
  ScoreModelDims dims_;
  int horizon_ = 0;
  Mlp core_;
  ConditionTable table_;
};

inline void write_score_model(ByteWriter& w, const ScoreModel& m) {
  const auto& d = m.dims();
  w.u32(static_cast<std::uint32_t>(m.horizon()));
  w.u32(static_cast<std::uint32_t>(d.data_dim));
  w.u32(static_cast<std::uint32_t>(d.time_dim));
  w.u32(static_cast<std::uint32_t>(d.num_conditions));
  w.u32(static_cast<std::uint32_t>(d.cond_dim));
  w.f64s(m.conditions().rows.data);
  write_mlp(w, m.core());
}

inline ScoreModel read_score_model(ByteReader& r) {
  ScoreModelDims d;
  const int horizon = static_cast<int>(r.u32());
  d.data_dim = r.u32();
  d.time_dim = r.u32();
  d.num_conditions = r.u32();
  d.cond_dim = r.u32();
  ConditionTable table;
  table.rows = Matrix(d.num_conditions + 1, d.cond_dim);
  r.f64s(table.rows.data);
  Mlp core = read_mlp(r);
  d.depth = core.depth() - 1;
  d.hidden = core.depth() > 1 ? core.layers().front().out_dim() : 0;
  d.activation = core.depth() > 1 ? core.layers().front().act : Activation::identity;
  return ScoreModel(d, horizon, std::move(core), std::move(table));
}

}  // namespace diffcon
