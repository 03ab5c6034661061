#pragma once

namespace fgdc {

// Applies FGDC_THREADS (if set and positive) to the OpenMP runtime and
// returns the resulting worker count.
int configure_threads_from_env();

void set_threads(int count);
int thread_count();

}  // namespace fgdc
