#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace mdgc {

// Global worker cap, settable once from the CLI (--threads). 0 = hardware.
void set_num_threads(int n);
int num_threads();

// Static block partition of [0, n) over the worker cap. Each index is
// processed exactly once; fn(i) must write only to its own slot so results
// are identical for any worker count.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  int workers = std::min(num_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi)
      break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i)
        fn(i);
    });
  }
  for (auto& t : pool)
    t.join();
}

} // namespace mdgc
