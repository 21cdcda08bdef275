#pragma once

// Thin wrapper so code can ask about OpenMP without ifdef noise at
// every call site. Returns serial answers when OpenMP is not compiled in.

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedrfq {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace fedrfq
