#ifndef PLUMECAST_PARALLEL_HPP
#define PLUMECAST_PARALLEL_HPP

#include <cstddef>

namespace plumecast {

/// Worker count for internal loops; honours PLUMECAST_THREADS.
int thread_count();

/// Runs body(i) for i in [0, n). Each index must write disjoint memory, which
/// keeps results independent of the thread count.
template <typename Body>
void parallel_for(std::ptrdiff_t n, Body&& body) {
#if defined(_OPENMP)
  const int threads = thread_count();
  if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

}  // namespace plumecast

#endif
