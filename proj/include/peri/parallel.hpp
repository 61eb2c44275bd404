#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace peri {

/// Thread count for work pools: PERITUMOR_THREADS wins over `configured`;
/// 0 means the OpenMP default.
int resolve_threads(int configured = 0);

/// Runs body(i) for i in [0, n) on `threads` OpenMP threads. Each index is
/// independent; an exception from the lowest failing index is rethrown after
/// the loop completes.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace peri
