#include "plumecast/parallel.hpp"

#include <cstdlib>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace plumecast {

int thread_count() {
  static const int count = [] {
    int n = 1;
#if defined(_OPENMP)
    n = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("PLUMECAST_THREADS")) {
      try {
        const int requested = std::stoi(env);
        if (requested >= 1) n = requested;
      } catch (const std::exception&) {
      }
    }
    return n < 1 ? 1 : n;
  }();
  return count;
}

}  // namespace plumecast
