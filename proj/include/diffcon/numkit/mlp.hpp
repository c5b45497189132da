#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

enum class Activation : std::uint32_t { identity = 0, tanh = 1, relu = 2 };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

/// y = act(W x + b), W stored out x in.
struct DenseLayer {
  Matrix weight;
  Vec bias;
  Activation act = Activation::identity;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
  std::size_t param_count() const { return weight.data.size() + bias.size(); }
};

/// Multilayer perceptron. Parameters are laid out layer by layer, weights
/// row-major followed by the bias; gradients, optimizer state and
/// checkpoints all use this order.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("Mlp needs at least one layer");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (l.bias.size() != l.out_dim()) throw ShapeError("layer " + std::to_string(k) + ": bias length mismatch");
      if (k > 0 && l.in_dim() != layers_[k - 1].out_dim())
        throw ShapeError("layer " + std::to_string(k) + ": input dim does not chain");
    }
    if (layers_.back().act != Activation::identity) throw ShapeError("final Mlp layer must be identity");
  }

  /// dims = {in, hidden..., out}. Weights ~ N(0, 1/fan_in), biases 0. With
  /// `zero_last`, the final layer starts at exactly zero.
  static Mlp make(std::span<const std::size_t> dims, Activation hidden, Rng& rng, bool zero_last = false) {
    if (dims.size() < 2) throw ShapeError("Mlp::make needs at least input and output dims");
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      DenseLayer l;
      l.weight = Matrix(dims[k + 1], dims[k]);
      l.bias.assign(dims[k + 1], 0.0);
      l.act = (k + 2 == dims.size()) ? Activation::identity : hidden;
      const bool last = (k + 2 == dims.size());
      if (!(last && zero_last)) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[k]));
        for (auto& w : l.weight.data) w = scale * rng.normal();
      }
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  }

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Vec params() const {
    Vec out;
    out.reserve(param_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void set_params(std::span<const double> p) {
    if (p.size() != param_count()) throw ShapeError("Mlp::set_params: wrong parameter count");
    std::size_t off = 0;
    for (auto& l : layers_) {
      std::copy_n(p.begin() + off, l.weight.data.size(), l.weight.data.begin());
      off += l.weight.data.size();
      std::copy_n(p.begin() + off, l.bias.size(), l.bias.begin());
      off += l.bias.size();
    }
  }

  /// Zero the final layer (weights and bias).
  void zero_last_layer() {
    auto& l = layers_.back();
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }

 private:
  std::vector<DenseLayer> layers_;
};

/// Per-layer inputs and post-activation outputs of one forward pass.
struct MlpTape {
  std::vector<Vec> inputs;
  std::vector<Vec> outputs;
};

namespace detail {

inline void dense_forward(const DenseLayer& l, const double* x, double* y) {
  const std::size_t in = l.in_dim();
  const std::size_t out = l.out_dim();
  const double* w = l.weight.data.data();
  for (std::size_t i = 0; i < out; ++i) {
    double acc = l.bias[i];
    const double* r = w + i * in;
    for (std::size_t j = 0; j < in; ++j) acc += r[j] * x[j];
    switch (l.act) {
      case Activation::identity: break;
      case Activation::tanh: acc = std::tanh(acc); break;
      case Activation::relu: acc = acc > 0.0 ? acc : 0.0; break;
    }
    y[i] = acc;
  }
}

}  // namespace detail

inline Vec mlp_forward(const Mlp& model, std::span<const double> input, MlpTape* tape = nullptr) {
  if (input.size() != model.in_dim())
    throw ShapeError("mlp_forward: expected input of length " + std::to_string(model.in_dim()) + ", got " +
                     std::to_string(input.size()));
  Vec cur(input.begin(), input.end());
  if (tape) {
    tape->inputs.resize(model.depth());
    tape->outputs.resize(model.depth());
  }
  for (std::size_t k = 0; k < model.depth(); ++k) {
    const auto& l = model.layers()[k];
    Vec next(l.out_dim());
    detail::dense_forward(l, cur.data(), next.data());
    if (tape) tape->inputs[k] = std::move(cur);
    cur = std::move(next);
    if (tape) tape->outputs[k] = cur;
  }
  return cur;
}

/// Adds the gradient of <upstream, output> w.r.t. the parameters into
/// `param_grad` (length param_count) and w.r.t. the input into `input_grad`
/// (length in_dim, or empty to skip).
inline void mlp_backward_accumulate(const Mlp& model, const MlpTape& tape, std::span<const double> upstream,
                                    std::span<double> param_grad, std::span<double> input_grad) {
  if (upstream.size() != model.out_dim()) throw ShapeError("mlp_backward: upstream length mismatch");
  if (!param_grad.empty() && param_grad.size() != model.param_count())
    throw ShapeError("mlp_backward: parameter gradient length mismatch");
  if (!input_grad.empty() && input_grad.size() != model.in_dim())
    throw ShapeError("mlp_backward: input gradient length mismatch");

  // Offsets of each layer's parameter block.
  std::vector<std::size_t> offsets(model.depth());
  std::size_t off = 0;
  for (std::size_t k = 0; k < model.depth(); ++k) {
    offsets[k] = off;
    off += model.layers()[k].param_count();
  }

  Vec delta(upstream.begin(), upstream.end());
  for (std::size_t k = model.depth(); k-- > 0;) {
    const auto& l = model.layers()[k];
    const Vec& y = tape.outputs[k];
    const Vec& x = tape.inputs[k];
    const std::size_t in = l.in_dim();
    const std::size_t out = l.out_dim();
    switch (l.act) {
      case Activation::identity: break;
      case Activation::tanh:
        for (std::size_t i = 0; i < out; ++i) delta[i] *= 1.0 - y[i] * y[i];
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < out; ++i)
          if (!(y[i] > 0.0)) delta[i] = 0.0;
        break;
    }
    if (!param_grad.empty()) {
      double* gw = param_grad.data() + offsets[k];
      double* gb = gw + out * in;
      for (std::size_t i = 0; i < out; ++i) {
        const double di = delta[i];
        if (di == 0.0) continue;
        double* row = gw + i * in;
        for (std::size_t j = 0; j < in; ++j) row[j] += di * x[j];
        gb[i] += di;
      }
    }
    if (k == 0 && input_grad.empty()) break;
    Vec prev(in, 0.0);
    const double* w = l.weight.data.data();
    for (std::size_t i = 0; i < out; ++i) {
      const double di = delta[i];
      if (di == 0.0) continue;
      const double* row = w + i * in;
      for (std::size_t j = 0; j < in; ++j) prev[j] += di * row[j];
    }
    if (k == 0) {
      for (std::size_t j = 0; j < in; ++j) input_grad[j] += prev[j];
    }
    delta = std::move(prev);
  }
}

struct MlpGradient {
  Vec params;
  Vec input;
};

/// Exact reverse-mode gradients of <upstream, mlp_forward(model, input)>.
inline MlpGradient mlp_backward(const Mlp& model, std::span<const double> input, std::span<const double> upstream) {
  if (upstream.size() != model.out_dim()) throw ShapeError("mlp_backward: upstream length mismatch");
  MlpTape tape;
  mlp_forward(model, input, &tape);
  MlpGradient g{Vec(model.param_count(), 0.0), Vec(model.in_dim(), 0.0)};
  mlp_backward_accumulate(model, tape, upstream, g.params, g.input);
  return g;
}

}  // namespace diffcon
