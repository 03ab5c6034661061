#include "fgdc/core/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace fgdc {

int configure_threads_from_env() {
  if (const char* env = std::getenv("FGDC_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) set_threads(n);
    } catch (const std::exception&) {
      // Malformed values leave the runtime default in place.
    }
  }
  return thread_count();
}

void set_threads(int count) { omp_set_num_threads(count > 0 ? count : 1); }

int thread_count() { return omp_get_max_threads(); }

}  // namespace fgdc
