#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/lsmdp/chain.hpp"
#include "diffcon/numkit/matrix.hpp"

namespace diffcon {

/// KL-optimal control of a tabular chain.
///
/// Step-indexed tables use t = 0..T. Index 0 is the virtual step that chooses
/// x_1 from a single dummy state, so log_z[0] and value[0] have one entry and
/// kernels[0] is a 1 x S matrix (the controlled initial distribution).
struct OracleResult {
  double tau = 1.0;
  std::vector<Vec> log_z;
  std::vector<Vec> z;
  std::vector<Vec> value;
  std::vector<Matrix> kernels;   // Q_0..Q_{T-1}
  std::vector<Matrix> log_tilt;  // ln(Q_t / P_t); -inf where P_t = 0
  std::vector<Vec> marginals;    // m_1..m_T at indices 0..T-1
  Vec p_star;
};

namespace detail {

inline void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("temperature tau must be positive and finite");
}

inline double logsumexp_weighted(std::span<const double> probs, std::span<const double> logv) {
  // Shift by the largest log-value on the support so that equal values
  // come back exactly (no tilt means no change to the kernel).
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) mx = std::max(mx, logv[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) s += probs[i] * std::exp(logv[i] - mx);
  return mx + std::log(s);
}

inline Vec push_forward(std::span<const double> m, const Matrix& k) {
  Vec out(k.cols, 0.0);
  for (std::size_t s = 0; s < k.rows; ++s)
    for (std::size_t s2 = 0; s2 < k.cols; ++s2) out[s2] += m[s] * k(s, s2);
  return out;
}

/// Dummy-state kernel whose single row is `init`.
inline Matrix initial_kernel(const TabularChain& chain) { return Matrix(1, chain.states, chain.init); }

}  // namespace detail

/// log Z_t(s) for t = 0..T, with Z_T = exp(r / tau), Z_t = P_t Z_{t+1} and
/// Z_0 = <init, Z_1>.
inline std::vector<Vec> log_z_recursion(const TabularChain& chain, double tau) {
  detail::require_tau(tau);
  chain.validate();
  const int T = chain.steps;
  std::vector<Vec> lz(static_cast<std::size_t>(T + 1));
  lz[T].resize(chain.states);
  for (std::size_t s = 0; s < chain.states; ++s) lz[T][s] = chain.reward[s] / tau;
  for (int t = T - 1; t >= 1; --t) {
    const Matrix& p = chain.kernel(t);
    lz[t].resize(chain.states);
    for (std::size_t s = 0; s < chain.states; ++s) lz[t][s] = detail::logsumexp_weighted(p.row(s), lz[t + 1]);
  }
  lz[0] = {detail::logsumexp_weighted(chain.init, lz[1])};
  return lz;
}

/// Z tables (exponentiated log_z_recursion); may overflow for tiny tau.
inline std::vector<Vec> z_recursion(const TabularChain& chain, double tau) {
  auto lz = log_z_recursion(chain, tau);
  for (auto& row : lz)
    for (auto& v : row) v = std::exp(v);
  return lz;
}

/// Full KL oracle: Z, V = tau ln Z, tilted kernels, marginals and p_star.
inline OracleResult solve_kl(const TabularChain& chain, double tau) {
  OracleResult res;
  res.tau = tau;
  res.log_z = log_z_recursion(chain, tau);
  const int T = chain.steps;
  res.z = res.log_z;
  res.value = res.log_z;
  for (std::size_t t = 0; t < res.z.size(); ++t)
    for (std::size_t s = 0; s < res.z[t].size(); ++s) {
      res.z[t][s] = std::exp(res.log_z[t][s]);
      res.value[t][s] = tau * res.log_z[t][s];
    }
  for (int t = 0; t < T; ++t) {
    const Matrix p = t == 0 ? detail::initial_kernel(chain) : chain.kernel(t);
    Matrix q(p.rows, p.cols);
    Matrix u(p.rows, p.cols);
    for (std::size_t s = 0; s < p.rows; ++s) {
      const double lz_here = res.log_z[t][s];
      if (!std::isfinite(lz_here)) throw NumericError("optimal kernel: Z_t(s) vanished");
      for (std::size_t s2 = 0; s2 < p.cols; ++s2) {
        if (p(s, s2) == 0.0) {
          u(s, s2) = -std::numeric_limits<double>::infinity();
          continue;
        }
        u(s, s2) = res.log_z[t + 1][s2] - lz_here;
        q(s, s2) = p(s, s2) * std::exp(u(s, s2));
      }
    }
    res.kernels.push_back(std::move(q));
    res.log_tilt.push_back(std::move(u));
  }
  const auto first = res.kernels[0].row(0);
  Vec m(first.begin(), first.end());
  res.marginals.push_back(m);
  for (int t = 1; t < T; ++t) {
    m = detail::push_forward(m, res.kernels[t]);
    res.marginals.push_back(m);
  }
  // Closed form p_{0,T}(s) exp(r(s)/tau) / Z_0.
  const Vec passive_terminal = passive_marginals(chain).back();
  res.p_star.resize(chain.states);
  for (std::size_t s = 0; s < chain.states; ++s)
    res.p_star[s] = passive_terminal[s] * std::exp(chain.reward[s] / tau - res.log_z[0][0]);
  return res;
}

/// Tilted kernels Q_1..Q_{T-1}.
inline std::vector<Matrix> optimal_kernel(const TabularChain& chain, double tau) {
  auto res = solve_kl(chain, tau);
  res.kernels.erase(res.kernels.begin());
  return res.kernels;
}

inline Vec terminal_marginal(const TabularChain& chain, double tau) { return solve_kl(chain, tau).p_star; }

/// Weights [(f')^-1((r_i - b) / tau)]_+ for a given baseline b.
inline Vec baseline_weights(const FDiv& fd, std::span<const double> rewards, double b, double tau) {
  Vec w(rewards.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(0.0, fd.fprime_inv((rewards[i] - b) / tau));
  return w;
}

/// Baseline b with sum_i probs_i [(f')^-1((r_i - b) / tau)]_+ = 1, by bisection.
///
/// The bracket [min r - tau f'(1), max r - tau f'(1)] always contains the
/// root because the weight is non-increasing in b and equals 1 at
/// b = r - tau f'(1).
inline double solve_baseline(const FDiv& fd, std::span<const double> rewards, std::span<const double> probs,
                             double tau) {
  detail::require_tau(tau);
  if (rewards.size() != probs.size() || rewards.empty()) throw ShapeError("solve_baseline: length mismatch");
  double rmin = std::numeric_limits<double>::infinity();
  double rmax = -rmin;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    rmin = std::min(rmin, rewards[i]);
    rmax = std::max(rmax, rewards[i]);
  }
  if (!std::isfinite(rmin) || !std::isfinite(rmax)) throw DomainError("solve_baseline: no support or non-finite reward");
  const double shift = tau * fd.fprime(1.0);
  auto residual = [&](double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i)
      if (probs[i] > 0.0) s += probs[i] * std::max(0.0, fd.fprime_inv((rewards[i] - b) / tau));
    return s - 1.0;
  };
  double lo = rmin - shift;
  double hi = rmax - shift;
  if (lo == hi) return lo;
  const double g_lo = residual(lo);
  const double g_hi = residual(hi);
  if (!(g_lo >= -1e-9) || !(g_hi <= 1e-9)) {
    std::ostringstream os;
    os << "solve_baseline: bracket [" << lo << ", " << hi << "] does not contain the root (residuals " << g_lo
       << ", " << g_hi << ", tau " << tau << ", divergence " << fd.name() << ")";
    throw NumericError(os.str());
  }
  constexpr int kMaxIter = 200;
  constexpr double kTol = 1e-12;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxIter; ++it) {
    mid = 0.5 * (lo + hi);
    const double g = residual(mid);
    if (std::abs(g) <= kTol) break;
    if (g > 0.0)
      lo = mid;
    else
      hi = mid;
    if (std::nextafter(lo, hi) >= hi) break;
  }
  return mid;
}

/// Optimal next-state distribution from P(s, .) against continuation values v:
/// argmax_q E_q[v] - tau D_f(q || P(s, .)), via the KKT form.
inline Vec kkt_row(const FDiv& fd, std::span<const double> prow, std::span<const double> v, double tau) {
  const double b = solve_baseline(fd, v, prow, tau);
  Vec q(prow.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (prow[i] <= 0.0) continue;
    q[i] = prow[i] * std::max(0.0, fd.fprime_inv((v[i] - b) / tau));
    s += q[i];
  }
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("kkt_row: degenerate optimal row");
  for (auto& x : q) x /= s;
  return q;
}

/// f-regularized value recursion. Same indexing as OracleResult:
/// value[0] / kernels[0] belong to the initial-distribution control.
struct GeneralValueResult {
  std::vector<Vec> value;
  std::vector<Matrix> kernels;
  std::vector<Vec> marginals;
  Vec p_star;
};

inline GeneralValueResult value_general_f(const TabularChain& chain, double tau, const FDiv& fd) {
  detail::require_tau(tau);
  chain.validate();
  const int T = chain.steps;
  GeneralValueResult res;
  res.value.resize(static_cast<std::size_t>(T + 1));
  res.kernels.resize(static_cast<std::size_t>(T));
  res.value[T] = chain.reward;
  for (int t = T - 1; t >= 0; --t) {
    const Matrix p = t == 0 ? detail::initial_kernel(chain) : chain.kernel(t);
    Matrix q(p.rows, p.cols);
    Vec v(p.rows);
    for (std::size_t s = 0; s < p.rows; ++s) {
      const Vec row = kkt_row(fd, p.row(s), res.value[t + 1], tau);
      std::copy(row.begin(), row.end(), q.row(s).begin());
      const DivValue div = div_discrete(fd, row, p.row(s));
      if (div.infinite) throw NumericError("value_general_f: optimal row left the passive support");
      v[s] = dot(row, res.value[t + 1]) - tau * div.value;
    }
    res.value[t] = std::move(v);
    res.kernels[t] = std::move(q);
  }
  const auto first = res.kernels[0].row(0);
  Vec m(first.begin(), first.end());
  res.marginals.push_back(m);
  for (int t = 1; t < T; ++t) {
    m = detail::push_forward(m, res.kernels[t]);
    res.marginals.push_back(m);
  }
  res.p_star = m;
  return res;
}

/// Trajectory-level brute force under the passive chain. Paths are ordered
/// lexicographically with x_1 the most significant digit.
struct TrajectoryBruteResult {
  double baseline = 0.0;
  std::vector<std::vector<int>> paths;
  Vec path_prob;
  Vec weight;
  Vec p_tilde;
};

inline constexpr double kMaxEnumeratedPaths = 1e6;

inline TrajectoryBruteResult trajectory_brute(const TabularChain& chain, double tau, const FDiv& fd) {
  detail::require_tau(tau);
  chain.validate();
  const double count_d = std::pow(static_cast<double>(chain.states), chain.steps);
  if (count_d > kMaxEnumeratedPaths)
    throw ConfigError("trajectory_brute: S^T = " + std::to_string(count_d) + " exceeds the enumeration guard of 1e6");
  const auto count = static_cast<std::size_t>(count_d);
  const auto S = chain.states;
  const auto T = static_cast<std::size_t>(chain.steps);
  TrajectoryBruteResult res;
  res.paths.reserve(count);
  res.path_prob.reserve(count);
  Vec terminal_reward;
  terminal_reward.reserve(count);
  std::vector<int> path(T);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t code = i;
    for (std::size_t k = T; k-- > 0;) {
      path[k] = static_cast<int>(code % S);
      code /= S;
    }
    double p = chain.init[path[0]];
    for (std::size_t k = 0; k + 1 < T; ++k) p *= chain.kernels[k](path[k], path[k + 1]);
    res.paths.push_back(path);
    res.path_prob.push_back(p);
    terminal_reward.push_back(chain.reward[path[T - 1]]);
  }
  res.baseline = solve_baseline(fd, terminal_reward, res.path_prob, tau);
  res.weight = baseline_weights(fd, terminal_reward, res.baseline, tau);
  res.p_tilde.assign(S, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double m = res.path_prob[i] * res.weight[i];
    res.p_tilde[res.paths[i][T - 1]] += m;
    total += m;
  }
  for (auto& v : res.p_tilde) v /= total;
  return res;
}

}  // namespace diffcon
