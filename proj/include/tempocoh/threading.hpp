// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tempocoh {

// Worker count: min(hardware, TEMPOCOH_THREADS if set, n). Never below 1.
inline int64_t worker_count(int64_t n) {
  int64_t hw = static_cast<int64_t>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("TEMPOCOH_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v < hw) hw = v;
  }
  return hw < n ? hw : (n < 1 ? 1 : n);
}

// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
// must only write to per-index slots so the result is independent of the
// worker count. Exceptions propagate from the serial fallback only; the
// parallel path requires fn not to throw.
template <typename Fn>
void parallel_for(int64_t n, Fn&& fn) {
  if (n <= 0) return;
  int64_t workers = worker_count(n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int64_t w = 0; w < workers; ++w) {
    pool.emplace_back([w, workers, n, &fn] {
      for (int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace tempocoh
