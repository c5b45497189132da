#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace diffcon {

/// Worker count: hardware concurrency, capped by the DIFFCON_THREADS
/// environment variable when it is set to a positive integer.
inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DIFFCON_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return n;
}

/// Runs fn(i) for i in [0, n). Each index must write only to its own output
/// slot; the first exception thrown by any worker is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Sum of per-item contributions into a length-`dim` accumulator.
///
/// Items are grouped into fixed chunks of `kChunk`; chunks may run on any
/// worker but are reduced in index order, so the floating-point result does
/// not depend on the worker count. fn(i, acc) adds item i into acc and
/// returns its scalar contribution.
template <class Fn>
double chunked_sum(std::size_t n, std::size_t dim, std::span<double> out, Fn&& fn) {
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks);
  std::vector<double> scalar(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t k) {
    partial[k].assign(dim, 0.0);
    const std::size_t end = std::min(n, (k + 1) * kChunk);
    for (std::size_t i = k * kChunk; i < end; ++i) scalar[k] += fn(i, std::span<double>(partial[k]));
  });
  double total = 0.0;
  for (std::size_t k = 0; k < chunks; ++k) {
    total += scalar[k];
    for (std::size_t j = 0; j < dim; ++j) out[j] += partial[k][j];
  }
  return total;
}

}  // namespace diffcon
