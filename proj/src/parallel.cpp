#include "chrono_lens/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chronolens {

namespace {
int g_jobs = -1;  // -1 = not yet resolved

int resolve_default() {
  if (const char* env = std::getenv("CHRONO_LENS_JOBS")) {
    try {
      int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (...) {
    }
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace

void set_jobs(int j) { g_jobs = (j >= 1) ? j : -1; }

int jobs() {
  if (g_jobs < 0) g_jobs = resolve_default();
  return g_jobs;
}

void parallel_for(std::size_t n, const void*, void (*fn)(std::size_t, void*), void* ctx) {
  const int j = jobs();
  if (j <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i, ctx);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(j)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    fn(static_cast<std::size_t>(i), ctx);
#else
  for (std::size_t i = 0; i < n; ++i) fn(i, ctx);
#endif
}

}  // namespace chronolens
