#pragma once

// Include this instead of <omp.h> so the library still builds without OpenMP.
#if defined(_OPENMP)
#include <omp.h>
namespace fairvoice::parallel {
constexpr bool enabled = true;
inline int max_threads() { return omp_get_max_threads(); }
inline int thread_id() { return omp_get_thread_num(); }
}  // namespace fairvoice::parallel
#else
namespace fairvoice::parallel {
constexpr bool enabled = false;
inline int max_threads() { return 1; }
inline int thread_id() { return 0; }
}  // namespace fairvoice::parallel
#endif
