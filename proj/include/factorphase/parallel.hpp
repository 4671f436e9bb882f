#pragma once

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace factorphase {

inline int default_workers() {
  if (const char* env = std::getenv("FACTORPHASE_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs fn(task_id) for task_id in [0, n_tasks). Each task derives its own
// RNG stream from the task id, and callers store results indexed by task id,
// so output is independent of the worker count.
template <class F>
void parallel_tasks(long n_tasks, int workers, F&& fn) {
  if (workers <= 1 || n_tasks <= 1) {
    for (long t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::atomic<long> next{0};
  auto run = [&]() {
    for (;;) {
      const long t = next.fetch_add(1);
      if (t >= n_tasks) return;
      fn(t);
    }
  };
  std::vector<std::thread> pool;
  const int nw = std::min<long>(workers, n_tasks);
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) pool.emplace_back(run);
  for (auto& th : pool) th.join();
}

}  // namespace factorphase
