#pragma once

#include <cstdint>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ccqa {

inline int hardware_jobs() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Runs fn(i) for i in [0, n). jobs <= 1 takes the serial reference path.
// Callers write results into per-index slots and reduce in index order
// afterwards, so output is bit-identical for every jobs value.
template <typename Fn>
void for_each_index(std::int64_t n, int jobs, Fn&& fn) {
#ifdef _OPENMP
    if (jobs > 1 && n > 1) {
        std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
        for (std::int64_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
#pragma omp critical(ccqa_for_each_index_err)
                {
                    if (!err) err = std::current_exception();
                }
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#else
    (void)jobs;
#endif
    for (std::int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace ccqa
