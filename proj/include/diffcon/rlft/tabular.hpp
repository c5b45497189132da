#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/lsmdp/chain.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/parallel.hpp"
#include "diffcon/rng.hpp"

namespace diffcon {

/// Softmax-logit policy on a tabular chain. logits[0] is the 1 x S row for
/// the initial choice; logits[t] (t = 1..T-1) is S x S for step t.
struct TabularPolicy {
  std::vector<Matrix> logits;

  static TabularPolicy random(const TabularChain& chain, Rng& rng, double scale = 1.0) {
    TabularPolicy p;
    p.logits.emplace_back(1, chain.states);
    for (int t = 1; t < chain.steps; ++t) p.logits.emplace_back(chain.states, chain.states);
    for (auto& m : p.logits)
      for (auto& v : m.data) v = scale * rng.normal();
    return p;
  }

  /// Logits reproducing the passive kernels (requires strictly positive P).
  static TabularPolicy passive(const TabularChain& chain) {
    TabularPolicy p;
    p.logits.emplace_back(1, chain.states);
    for (std::size_t s = 0; s < chain.states; ++s) p.logits[0](0, s) = std::log(chain.init[s]);
    for (int t = 1; t < chain.steps; ++t) {
      Matrix m(chain.states, chain.states);
      const Matrix& k = chain.kernel(t);
      for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = std::log(k.data[i]);
      p.logits.push_back(std::move(m));
    }
    return p;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& m : logits) n += m.data.size();
    return n;
  }

  Vec params() const {
    Vec p;
    for (const auto& m : logits) p.insert(p.end(), m.data.begin(), m.data.end());
    return p;
  }

  void set_params(std::span<const double> p) {
    if (p.size() != param_count()) throw ShapeError("TabularPolicy: parameter count mismatch");
    std::size_t off = 0;
    for (auto& m : logits) {
      std::copy_n(p.begin() + off, m.data.size(), m.data.begin());
      off += m.data.size();
    }
  }

  /// Row-softmax of every logit table: Q_0..Q_{T-1}.
  std::vector<Matrix> kernels() const {
    std::vector<Matrix> out;
    for (const auto& m : logits) {
      Matrix q(m.rows, m.cols);
      for (std::size_t s = 0; s < m.rows; ++s) {
        const auto row = m.row(s);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t k = 0; k < m.cols; ++k) z += std::exp(row[k] - mx);
        for (std::size_t k = 0; k < m.cols; ++k) q(s, k) = std::exp(row[k] - mx) / z;
      }
      out.push_back(std::move(q));
    }
    return out;
  }
};

namespace detail {

inline Matrix passive_kernel_at(const TabularChain& chain, int t) {
  return t == 0 ? Matrix(1, chain.states, chain.init) : chain.kernel(t);
}

inline void check_policy_shape(const TabularChain& chain, const std::vector<Matrix>& q) {
  if (q.size() != static_cast<std::size_t>(chain.steps)) throw ShapeError("policy kernels: expected T tables");
  if (q[0].rows != 1 || q[0].cols != chain.states) throw ShapeError("policy kernels: initial table must be 1 x S");
  for (std::size_t t = 1; t < q.size(); ++t)
    if (q[t].rows != chain.states || q[t].cols != chain.states) throw ShapeError("policy kernels: step table must be S x S");
}

}  // namespace detail

/// Regularized values of a fixed policy:
/// V_T = r, V_t(s) = E_Q[V_{t+1}] - tau D_f(Q(s, .) || P(s, .)).
/// Index 0 is the dummy initial state; J = value[0][0].
inline std::vector<Vec> policy_values(const TabularChain& chain, const std::vector<Matrix>& q, double tau,
                                      const FDiv& fd) {
  detail::check_policy_shape(chain, q);
  const int T = chain.steps;
  std::vector<Vec> v(static_cast<std::size_t>(T + 1));
  v[T] = chain.reward;
  for (int t = T - 1; t >= 0; --t) {
    const Matrix p = detail::passive_kernel_at(chain, t);
    v[t].resize(p.rows);
    for (std::size_t s = 0; s < p.rows; ++s) {
      double val = dot(q[t].row(s), v[t + 1]);
      if (tau != 0.0) {
        const DivValue div = div_discrete(fd, q[t].row(s), p.row(s));
        if (div.infinite) throw DomainError("policy leaves the support of the passive kernel");
        val -= tau * div.value;
      }
      v[t][s] = val;
    }
  }
  return v;
}

inline double policy_objective(const TabularChain& chain, const TabularPolicy& policy, double tau, const FDiv& fd) {
  return policy_values(chain, policy.kernels(), tau, fd)[0][0];
}

/// Marginals of x_1..x_T under policy kernels (index t - 1).
inline std::vector<Vec> policy_marginals(const std::vector<Matrix>& q) {
  std::vector<Vec> m;
  const auto first = q[0].row(0);
  m.emplace_back(first.begin(), first.end());
  for (std::size_t t = 1; t < q.size(); ++t) {
    Vec next(q[t].cols, 0.0);
    for (std::size_t s = 0; s < q[t].rows; ++s)
      for (std::size_t k = 0; k < q[t].cols; ++k) next[k] += m.back()[s] * q[t](s, k);
    m.push_back(std::move(next));
  }
  return m;
}

/// A_t(s, s') = V_{t+1}(s') - tau f'(zeta) - V_t(s) + tau E_Q[f'(zeta) - f(zeta)/zeta],
/// zeta = Q_t(s, s') / P_t(s, s'). Entries with Q = 0 are left at 0.
inline std::vector<Matrix> soft_advantage_exact(const TabularChain& chain, const std::vector<Matrix>& q, double tau,
                                                const FDiv& fd) {
  const auto v = policy_values(chain, q, tau, fd);
  std::vector<Matrix> adv;
  for (int t = 0; t < chain.steps; ++t) {
    const Matrix p = detail::passive_kernel_at(chain, t);
    Matrix a(p.rows, p.cols);
    for (std::size_t s = 0; s < p.rows; ++s) {
      double correction = 0.0;
      if (tau != 0.0) {
        for (std::size_t k = 0; k < p.cols; ++k) {
          const double qk = q[t](s, k);
          if (qk == 0.0) continue;
          if (p(s, k) == 0.0) throw DomainError("soft advantage: policy leaves the passive support");
          const double zeta = qk / p(s, k);
          correction += qk * (fd.fprime(zeta) - fd.f(zeta) / zeta);
        }
      }
      for (std::size_t k = 0; k < p.cols; ++k) {
        const double qk = q[t](s, k);
        if (qk == 0.0) continue;
        double val = v[t + 1][k] - v[t][s];
        if (tau != 0.0) val += -tau * fd.fprime(qk / p(s, k)) + tau * correction;
        a(s, k) = val;
      }
    }
    adv.push_back(std::move(a));
  }
  return adv;
}

/// Exact gradient of J with respect to the policy logits,
/// sum_t E_{x_t ~ m_t} sum_{s'} Q(s, s') grad log Q(s, s') A_t(s, s'),
/// with grad_{theta_{t,s,k}} log Q(s, s') = 1[s' = k] - Q(s, k).
inline Vec exact_policy_gradient(const TabularChain& chain, const TabularPolicy& policy, double tau,
                                 const FDiv& fd) {
  const auto q = policy.kernels();
  const auto adv = soft_advantage_exact(chain, q, tau, fd);
  const auto marg = policy_marginals(q);
  Vec grad;
  grad.reserve(policy.param_count());
  for (int t = 0; t < chain.steps; ++t) {
    const Matrix& qt = q[t];
    for (std::size_t s = 0; s < qt.rows; ++s) {
      const double weight = t == 0 ? 1.0 : marg[t - 1][s];
      double mean_adv = 0.0;
      for (std::size_t k = 0; k < qt.cols; ++k) mean_adv += qt(s, k) * adv[t](s, k);
      for (std::size_t k = 0; k < qt.cols; ++k) grad.push_back(weight * qt(s, k) * (adv[t](s, k) - mean_adv));
    }
  }
  return grad;
}

/// A sampled path with its per-step log-ratios ln(Q / P).
struct TabularPath {
  std::vector<int> states;  // x_1..x_T
  Vec log_ratio;            // one per transition, including the initial choice
  double reward = 0.0;
};

namespace detail {

inline int sample_row(std::span<const double> row, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    acc += row[k];
    if (u < acc) return static_cast<int>(k);
  }
  for (std::size_t k = row.size(); k-- > 0;)
    if (row[k] > 0.0) return static_cast<int>(k);
  return 0;
}

}  // namespace detail

/// n paths under kernels q (pass the passive kernels to sample P_0);
/// path i uses rng.split(i).
inline std::vector<TabularPath> sample_tabular_paths(const TabularChain& chain, const std::vector<Matrix>& q,
                                                     std::size_t n, Rng& rng) {
  detail::check_policy_shape(chain, q);
  const Rng base(rng.next_u64());
  std::vector<TabularPath> out(n);
  parallel_for(n, [&](std::size_t i) {
    Rng r = base.split(i);
    TabularPath path;
    int s = detail::sample_row(q[0].row(0), r);
    path.states.push_back(s);
    path.log_ratio.push_back(std::log(q[0](0, s) / chain.init[s]));
    for (int t = 1; t < chain.steps; ++t) {
      const int next = detail::sample_row(q[t].row(s), r);
      path.log_ratio.push_back(std::log(q[t](s, next) / chain.kernel(t)(s, next)));
      path.states.push_back(next);
      s = next;
    }
    path.reward = chain.reward[s];
    out[i] = std::move(path);
  });
  return out;
}

/// Passive kernels in policy layout (Q_0 = init row, Q_t = P_t).
inline std::vector<Matrix> passive_policy_kernels(const TabularChain& chain) {
  std::vector<Matrix> q;
  for (int t = 0; t < chain.steps; ++t) q.push_back(detail::passive_kernel_at(chain, t));
  return q;
}

}  // namespace diffcon
