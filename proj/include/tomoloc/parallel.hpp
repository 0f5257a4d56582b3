#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tomoloc {

/// Number of workers to use when jobs <= 0 (delegates to OpenMP's default).
inline int default_jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Parallel map over [0, n). jobs == 1 runs the serial reference path; any
/// other value uses the OpenMP kernel. Tasks must write only to their own
/// slots and draw randomness from counter-based child streams, so both paths
/// produce byte-identical results.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  if (jobs <= 0) jobs = default_jobs();
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (long long i = 0; i < (long long)n; ++i) body((std::size_t)i);
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace tomoloc
