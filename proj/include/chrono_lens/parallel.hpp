#ifndef CHRONO_LENS_PARALLEL_HPP_
#define CHRONO_LENS_PARALLEL_HPP_

#include <cstddef>

namespace chronolens {

// Worker count for the data-parallel sweeps.  0 = use OpenMP's default.
// Resolution order: set_jobs() (CLI --jobs) > CHRONO_LENS_JOBS > OpenMP.
void set_jobs(int jobs);
int jobs();

// Runs fn(i) for i in [0, n).  jobs() == 1 takes the plain serial loop, which
// is the reference path the tests compare against.  Iterations must be
// independent; results land in caller-owned slots so the schedule cannot
// change the output.
void parallel_for(std::size_t n, const void* tag, void (*fn)(std::size_t, void*), void* ctx);

template <typename Fn>
void parallel_for_each(std::size_t n, Fn&& fn) {
  struct Ctx {
    Fn* fn;
  } c{&fn};
  parallel_for(
      n, nullptr,
      [](std::size_t i, void* p) { (*static_cast<Ctx*>(p)->fn)(i); }, &c);
}

}  // namespace chronolens

#endif
