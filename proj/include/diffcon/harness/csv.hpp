#pragma once

#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "diffcon/diffusion/train.hpp"

namespace diffcon {

/// Shortest text that parses back to the same double; "nan" / "inf" / "-inf"
/// for non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const char* kLogCsvHeader = "iter,loss,mean_reward,mean_kl,wallclock_ms";

inline std::string log_csv(std::span<const LogRow> rows) {
  std::string out = std::string(kLogCsvHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.iter) + "," + format_double(r.loss) + "," + format_double(r.mean_reward) + "," +
           format_double(r.mean_kl) + "," + format_double(r.wallclock_ms) + "\n";
  return out;
}

/// Comma-joined fields with a trailing newline.
inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
  return out + "\n";
}

}  // namespace diffcon
