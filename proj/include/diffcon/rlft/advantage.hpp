#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/rlft/rollout.hpp"
#include "diffcon/rlft/tabular.hpp"

namespace diffcon {

enum class AdvantageKind { exact_tabular, mc_return_baseline };

/// Per-(trajectory, step) advantages; values[i][t - 1] for step t.
struct AdvantageEstimate {
  AdvantageKind kind = AdvantageKind::mc_return_baseline;
  std::vector<Vec> values;
  double baseline = 0.0;
};

/// f(zeta) / zeta from ln zeta; for KL this is ln zeta exactly.
inline double penalty_per_ratio(const FDiv& fd, double log_zeta) {
  if (fd.kind() == FDiv::Kind::kl) return log_zeta;
  const double zeta = std::exp(log_zeta);
  return fd.f(zeta) / zeta;
}

/// G = r - tau sum_s f(zeta_s) / zeta_s.
inline double soft_return(double reward, std::span<const double> log_ratios, double tau, const FDiv& fd) {
  double pen = 0.0;
  if (tau != 0.0)
    for (double lr : log_ratios) pen += penalty_per_ratio(fd, lr);
  return reward - tau * pen;
}

inline Vec trajectory_log_ratios(const Trajectory& tr) {
  Vec out;
  for (int t = 1; t <= tr.steps(); ++t)
    if (auto lr = tr.log_ratio(t)) out.push_back(*lr);
  return out;
}

/// A = G - baseline at every step of each trajectory. Without an explicit
/// baseline the batch mean of G is used.
inline AdvantageEstimate soft_advantage_mc(const RolloutBatch& batch, double tau, const FDiv& fd,
                                           std::optional<double> baseline = std::nullopt) {
  if (batch.size() == 0) throw ShapeError("soft_advantage_mc: empty batch");
  Vec returns;
  for (const auto& tr : batch.trajectories) returns.push_back(soft_return(tr.reward, trajectory_log_ratios(tr), tau, fd));
  AdvantageEstimate est;
  if (baseline) {
    est.baseline = *baseline;
  } else {
    double s = 0.0;
    for (double g : returns) s += g;
    est.baseline = s / static_cast<double>(returns.size());
  }
  for (std::size_t i = 0; i < returns.size(); ++i)
    est.values.emplace_back(static_cast<std::size_t>(batch.trajectories[i].steps()), returns[i] - est.baseline);
  return est;
}

/// Tabular analogue: one advantage per path (constant over its steps).
inline Vec soft_advantage_mc(const std::vector<TabularPath>& paths, double tau, const FDiv& fd,
                             std::optional<double> baseline = std::nullopt) {
  if (paths.empty()) throw ShapeError("soft_advantage_mc: empty batch");
  Vec g;
  for (const auto& p : paths) g.push_back(soft_return(p.reward, p.log_ratio, tau, fd));
  double b = 0.0;
  if (baseline) {
    b = *baseline;
  } else {
    for (double v : g) b += v;
    b /= static_cast<double>(g.size());
  }
  for (auto& v : g) v -= b;
  return g;
}

}  // namespace diffcon
