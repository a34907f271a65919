// SPDX-License-Identifier: Apache-2.0
#include "neurtex/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace neurtex {
namespace {

int initial_threads() {
  int n = 0;
#ifdef _OPENMP
  n = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("NEURTEX_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0 && (n == 0 || cap < n)) n = cap;
  }
  return n > 0 ? n : 1;
}

std::atomic<int>& threads() {
  static std::atomic<int> n{initial_threads()};
  return n;
}

}  // namespace

int thread_count() { return threads().load(std::memory_order_relaxed); }

void set_thread_count(int n) { threads().store(n > 0 ? n : 1, std::memory_order_relaxed); }

}  // namespace neurtex
