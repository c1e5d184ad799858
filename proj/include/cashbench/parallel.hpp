#pragma once

#include <omp.h>

#include <cstddef>

namespace cashbench {

enum class ExecMode { Serial, Parallel };

// Runs f(i) for i in [0, n).  The serial path is the reference
// implementation used by the tests; the parallel path must produce
// identical results, which holds because every task draws from its own
// counter-based RNG stream and writes only to its own slot.
template <typename F>
void for_each_index(std::size_t n, ExecMode mode, int threads, F&& f) {
  if (mode == ExecMode::Serial || threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  if (threads <= 0) threads = omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    f(static_cast<std::size_t>(i));
  }
}

}  // namespace cashbench
