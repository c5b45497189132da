#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace diffcon {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based splittable generator.
///
/// Output n of a stream is a bijective mix of (key + n * golden); a stream is
/// fully described by its key and counter, so `split(i)` yields a child stream
/// that depends only on the parent key and `i`, never on how many values the
/// parent has already produced. Parallel workers take `split(index)` streams
/// and therefore produce identical results for any worker count.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : key_(detail::mix64(seed + detail::kGolden)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }

  result_type next_u64() noexcept { return detail::mix64(key_ + (counter_++) * detail::kGolden); }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer on [lo, hi].
  int uniform_int(int lo, int hi) noexcept {
    const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
    // Lemire's multiply-shift; the residual bias is below 2^-32 for the small
    // ranges used here.
    const auto r = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int>(static_cast<std::uint64_t>(r >> 64));
  }

  /// Standard normal draw (Box-Muller, both halves used).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::vector<double> normal_vector(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
  }

  /// Child stream keyed by `index`; independent of this stream's position.
  Rng split(std::uint64_t index) const noexcept {
    Rng child;
    child.key_ = detail::mix64(key_ ^ detail::mix64(index + 0xD1B54A32D192ED03ULL));
    return child;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace diffcon
