#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace calib {

// Worker count used when a caller passes threads = 0: the CALIB_THREADS
// environment variable if set, otherwise the OpenMP default, otherwise 1.
inline int default_thread_count() {
  if (const char* env = std::getenv("CALIB_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs body(i) for i in [0, count). threads <= 1 takes the plain serial loop,
// which is also the reference path the parallel one is tested against; the
// two must produce identical results, so body(i) may only touch state owned
// by index i. The first exception thrown by any worker is rethrown here.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
  if (threads == 0) threads = default_thread_count();
#ifdef _OPENMP
  if (threads > 1 && count > 1) {
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#endif
  for (std::size_t i = 0; i < count; ++i) body(i);
}

}  // namespace calib
