#include "mdgc/parallel.hpp"

#include <atomic>
#include <thread>

namespace mdgc {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) {
  if (n <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : (int)hw;
  }
  g_threads.store(n);
}

int num_threads() { return g_threads.load(); }

} // namespace mdgc
