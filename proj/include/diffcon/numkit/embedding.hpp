#pragma once

#include <cmath>
#include <string>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/matrix.hpp"

namespace diffcon {

/// Sinusoidal step embedding of s = t/T, interleaved as
/// (sin(f_0 s), cos(f_0 s), sin(f_1 s), cos(f_1 s), ...) with geometric
/// frequencies f_k = base_freq * 2^k, k < dim/2.
inline Vec time_embed(int t, std::size_t dim, int horizon, double base_freq = 1.0) {
  if (dim % 2 != 0) throw ConfigError("time_embed: dim must be even, got " + std::to_string(dim));
  if (t < 1 || t > horizon)
    throw RangeError("time_embed: t=" + std::to_string(t) + " outside [1, " + std::to_string(horizon) + "]");
  const double s = static_cast<double>(t) / static_cast<double>(horizon);
  Vec out(dim);
  double freq = base_freq;
  for (std::size_t k = 0; k < dim / 2; ++k) {
    out[2 * k] = std::sin(freq * s);
    out[2 * k + 1] = std::cos(freq * s);
    freq *= 2.0;
  }
  return out;
}

}  // namespace diffcon
