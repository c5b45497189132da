#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/numkit/mlp.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

/// Low-rank update W + scale * B A of one dense layer.
/// A is rank x in, B is out x rank; B starts at zero.
struct LoraLayer {
  Matrix a;
  Matrix b;
  double scale = 1.0;

  std::size_t rank() const { return a.rows; }
  std::size_t param_count() const { return a.data.size() + b.data.size(); }

  static LoraLayer make(std::size_t in, std::size_t out, std::size_t rank, double scale, Rng& rng) {
    if (rank == 0) throw ConfigError("LoRA rank must be at least 1");
    LoraLayer l{Matrix(rank, in), Matrix(out, rank), scale};
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : l.a.data) v = s * rng.normal();
    return l;
  }

  /// scale * B A as an out x in matrix.
  Matrix delta() const {
    Matrix d(b.rows, a.cols);
    for (std::size_t i = 0; i < b.rows; ++i)
      for (std::size_t k = 0; k < b.cols; ++k) {
        const double bik = scale * b(i, k);
        if (bik == 0.0) continue;
        for (std::size_t j = 0; j < a.cols; ++j) d(i, j) += bik * a(k, j);
      }
    return d;
  }
};

/// (W + scale B A) x + bias, before the layer's activation.
inline Vec lora_forward(const DenseLayer& base, const LoraLayer& adapter, std::span<const double> input) {
  if (adapter.a.cols != base.in_dim() || adapter.b.rows != base.out_dim() || adapter.b.cols != adapter.a.rows)
    throw ShapeError("lora_forward: adapter does not match layer");
  if (input.size() != base.in_dim()) throw ShapeError("lora_forward: input length mismatch");
  Vec y = matvec(base.weight, input);
  const Vec ax = matvec(adapter.a, input);
  const Vec bax = matvec(adapter.b, ax);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += adapter.scale * bax[i] + base.bias[i];
  return y;
}

/// One adapter per dense layer of an Mlp.
struct LoraSet {
  std::vector<LoraLayer> layers;

  static LoraSet make(const Mlp& base, std::size_t rank, double scale, Rng& rng) {
    LoraSet set;
    for (const auto& l : base.layers()) set.layers.push_back(LoraLayer::make(l.in_dim(), l.out_dim(), rank, scale, rng));
    return set;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }

  /// Layer by layer: A row-major, then B row-major.
  Vec params() const {
    Vec p;
    p.reserve(param_count());
    for (const auto& l : layers) {
      p.insert(p.end(), l.a.data.begin(), l.a.data.end());
      p.insert(p.end(), l.b.data.begin(), l.b.data.end());
    }
    return p;
  }

  void set_params(std::span<const double> p) {
    if (p.size() != param_count()) throw ShapeError("LoraSet: parameter count mismatch");
    std::size_t off = 0;
    for (auto& l : layers) {
      std::copy_n(p.begin() + off, l.a.data.size(), l.a.data.begin());
      off += l.a.data.size();
      std::copy_n(p.begin() + off, l.b.data.size(), l.b.data.begin());
      off += l.b.data.size();
    }
  }

  void check_matches(const Mlp& base) const {
    if (layers.size() != base.depth()) throw ShapeError("LoraSet: layer count does not match base network");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      const auto& d = base.layers()[k];
      if (l.a.cols != d.in_dim() || l.b.rows != d.out_dim() || l.b.cols != l.a.rows)
        throw ShapeError("LoraSet: adapter " + std::to_string(k) + " does not match its layer");
    }
  }
};

/// Base network with every adapter delta added into its weights. Entries
/// whose delta is exactly zero are left untouched, so a zero-initialized set
/// reproduces the base bit for bit.
inline Mlp merge_lora(const Mlp& base, const LoraSet& set) {
  set.check_matches(base);
  Mlp merged = base;
  for (std::size_t k = 0; k < set.layers.size(); ++k) {
    const Matrix d = set.layers[k].delta();
    auto& w = merged.layers()[k].weight.data;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (d.data[i] != 0.0) w[i] += d.data[i];
  }
  return merged;
}

/// Projects gradients of the merged weights (in Mlp parameter layout) onto
/// the adapter parameters: dA = scale B^T dW, dB = scale dW A^T.
inline void lora_project_grad(const Mlp& base, const LoraSet& set, std::span<const double> merged_grad,
                              std::span<double> lora_grad) {
  if (merged_grad.size() != base.param_count() || lora_grad.size() != set.param_count())
    throw ShapeError("lora_project_grad: gradient length mismatch");
  std::size_t moff = 0;
  std::size_t loff = 0;
  for (std::size_t k = 0; k < set.layers.size(); ++k) {
    const auto& l = set.layers[k];
    const std::size_t in = l.a.cols;
    const std::size_t out = l.b.rows;
    const std::size_t r = l.rank();
    const double* dw = merged_grad.data() + moff;
    double* ga = lora_grad.data() + loff;
    double* gb = ga + r * in;
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t j = 0; j < in; ++j) {
        const double g = dw[i * in + j];
        if (g == 0.0) continue;
        for (std::size_t q = 0; q < r; ++q) {
          ga[q * in + j] += l.scale * l.b(i, q) * g;
          gb[i * r + q] += l.scale * g * l.a(q, j);
        }
      }
    moff += base.layers()[k].param_count();
    loff += l.param_count();
  }
}

inline void write_lora(ByteWriter& w, const LoraSet& set) {
  w.u32(static_cast<std::uint32_t>(set.layers.size()));
  for (const auto& l : set.layers) {
    w.u32(static_cast<std::uint32_t>(l.rank()));
    w.u32(static_cast<std::uint32_t>(l.a.cols));
    w.u32(static_cast<std::uint32_t>(l.b.rows));
    w.f64(l.scale);
    w.f64s(l.a.data);
    w.f64s(l.b.data);
  }
}

inline LoraSet read_lora(ByteReader& r) {
  LoraSet set;
  const std::uint32_t n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint32_t rank = r.u32();
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    LoraLayer l{Matrix(rank, in), Matrix(out, rank), r.f64()};
    r.f64s(l.a.data);
    r.f64s(l.b.data);
    set.layers.push_back(std::move(l));
  }
  return set;
}

}  // namespace diffcon
