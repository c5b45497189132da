#pragma once

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

#include "diffcon/errors.hpp"

namespace diffcon {

/// An f-divergence generator: f convex on (0, inf) with f(1) = 0.
///
/// Alpha(a) uses f(t) = (t^a - a t + a - 1) / (a (a - 1)), the antiderivative
/// of f'(t) = (t^(a-1) - 1) / (a - 1) vanishing at 1.
class FDiv {
 public:
  enum class Kind { kl, alpha, custom };

  struct CustomFns {
    std::function<double(double)> f;
    std::function<double(double)> fprime;
    std::function<double(double)> fprime_inv;
  };

  static FDiv kl() { return FDiv(Kind::kl, 0.0); }

  static FDiv alpha(double a) {
    if (!std::isfinite(a) || a == 1.0 || a == 0.0) throw ConfigError("alpha divergence needs a finite alpha outside {0, 1}");
    return FDiv(Kind::alpha, a);
  }

  static FDiv custom(CustomFns fns) {
    if (!fns.f || !fns.fprime || !fns.fprime_inv) throw ConfigError("custom divergence needs f, f' and (f')^-1");
    FDiv d(Kind::custom, 0.0);
    d.custom_ = std::move(fns);
    return d;
  }

  /// Parses "kl" or "alpha:<value>".
  static FDiv parse(std::string_view text) {
    if (text == "kl") return kl();
    constexpr std::string_view prefix = "alpha:";
    if (text.starts_with(prefix)) {
      const std::string_view num = text.substr(prefix.size());
      double a = 0.0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), a);
      if (ec != std::errc{} || ptr != num.data() + num.size())
        throw ConfigError("bad alpha value in divergence '" + std::string(text) + "'");
      return alpha(a);
    }
    throw ConfigError("unknown divergence '" + std::string(text) + "' (expected kl or alpha:<value>)");
  }

  Kind kind() const { return kind_; }
  double alpha_value() const { return alpha_; }

  std::string name() const {
    switch (kind_) {
      case Kind::kl:
        return "kl";
      case Kind::alpha: {
        std::ostringstream os;
        os.precision(17);
        os << "alpha:" << alpha_;
        return os.str();
      }
      case Kind::custom:
        return "custom";
    }
    return "custom";
  }

  double f(double t) const {
    require_positive(t);
    switch (kind_) {
      case Kind::kl:
        return t * std::log(t);
      case Kind::alpha:
        // (t^a - a t + a - 1) / (a (a - 1)) rewritten as (t f'(t) - (t - 1)) / a
        // so that nothing cancels as a -> 1.
        return (t * fprime(t) - (t - 1.0)) / alpha_;
      case Kind::custom:
        return custom_.f(t);
    }
    return 0.0;
  }

  double fprime(double t) const {
    require_positive(t);
    switch (kind_) {
      case Kind::kl:
        return std::log(t) + 1.0;
      case Kind::alpha:
        return std::expm1((alpha_ - 1.0) * std::log(t)) / (alpha_ - 1.0);
      case Kind::custom:
        return custom_.fprime(t);
    }
    return 0.0;
  }

  /// (f')^-1(y); for Alpha the positive part [1 + (a-1) y]_+ is applied, so
  /// the result is 0 (a > 1) or +inf (a < 1) outside the range of f'.
  double fprime_inv(double y) const {
    switch (kind_) {
      case Kind::kl:
        return std::exp(y - 1.0);
      case Kind::alpha: {
        const double am1 = alpha_ - 1.0;
        const double u = am1 * y;
        if (u <= -1.0) return am1 > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        return std::exp(std::log1p(u) / am1);
      }
      case Kind::custom:
        return custom_.fprime_inv(y);
    }
    return 0.0;
  }

  /// lim_{t -> 0+} f(t), needed where p vanishes but q does not.
  double f_at_zero() const {
    switch (kind_) {
      case Kind::kl:
        return 0.0;
      case Kind::alpha:
        return alpha_ > 0.0 ? 1.0 / alpha_ : std::numeric_limits<double>::infinity();
      case Kind::custom:
        return custom_.f(0.0);
    }
    return 0.0;
  }

 private:
  FDiv(Kind k, double a) : kind_(k), alpha_(a) {}

  static void require_positive(double t) {
    if (!(t > 0.0)) throw DomainError("f-divergence generator evaluated at non-positive argument");
  }

  Kind kind_;
  double alpha_;
  CustomFns custom_;
};

/// Result of a discrete divergence; `infinite` is set when p puts mass
/// outside the support of q.
struct DivValue {
  double value = 0.0;
  bool infinite = false;
};

namespace detail {

inline void check_distribution_tol(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw DomainError(std::string(what) + " has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-10) throw DomainError(std::string(what) + " does not sum to 1");
}

}  // namespace detail

/// D_f(p || q) = sum_x q(x) f(p(x) / q(x)).
inline DivValue div_discrete(const FDiv& fd, std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("div_discrete: length mismatch");
  detail::check_distribution_tol(p, "div_discrete: p");
  detail::check_distribution_tol(q, "div_discrete: q");
  DivValue out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] == 0.0) {
      if (p[i] > 0.0) return {std::numeric_limits<double>::infinity(), true};
      continue;
    }
    out.value += p[i] == 0.0 ? q[i] * fd.f_at_zero() : q[i] * fd.f(p[i] / q[i]);
  }
  return out;
}

/// KL between N(mu1, s2 I) and N(mu2, s2 I).
inline double kl_gauss_shared_cov(std::span<const double> mu1, std::span<const double> mu2, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("kl_gauss_shared_cov: variance must be positive");
  if (mu1.size() != mu2.size()) throw ShapeError("kl_gauss_shared_cov: length mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double d = mu1[i] - mu2[i];
    sq += d * d;
  }
  return sq / (2.0 * sigma2);
}

}  // namespace diffcon
