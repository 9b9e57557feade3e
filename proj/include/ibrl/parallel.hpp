#pragma once

#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ibrl::par {

// Runtime switch between the OpenMP kernels and the serial reference path.
// Both paths perform identical arithmetic in identical order: parallel loops
// only ever write disjoint slots, and reductions are chunked with a fixed
// decomposition and folded in chunk-index order. Results are therefore
// bit-identical for any thread count, which the tests assert.

bool enabled();
void set_enabled(bool on);
int max_threads();
void set_max_threads(int n);

inline constexpr std::int64_t kSumChunk = 4096;

template <class F>
void for_index(std::int64_t n, F&& body) {
#ifdef _OPENMP
  if (enabled() && n > 1 && !omp_in_parallel()) {
    // Exceptions may not unwind out of an OpenMP region; hold the first one
    // and rethrow after the join.
    std::exception_ptr error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

/// Deterministic sum: fixed-size chunks, serial fold over chunk index.
template <class F>
double sum_terms(std::int64_t n, F&& term) {
  if (n <= kSumChunk) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += term(i);
    return acc;
  }
  const std::int64_t nchunks = (n + kSumChunk - 1) / kSumChunk;
  std::vector<double> partial(static_cast<std::size_t>(nchunks));
  for_index(nchunks, [&](std::int64_t c) {
    const std::int64_t lo = c * kSumChunk;
    const std::int64_t hi = lo + kSumChunk < n ? lo + kSumChunk : n;
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += term(i);
    partial[static_cast<std::size_t>(c)] = acc;
  });
  double acc = 0.0;
  for (double p : partial) acc += p;
  return acc;
}

inline double sum(std::span<const double> x) {
  return sum_terms(static_cast<std::int64_t>(x.size()), [&](std::int64_t i) {
    return x[static_cast<std::size_t>(i)];
  });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return sum_terms(static_cast<std::int64_t>(a.size()), [&](std::int64_t i) {
    const auto j = static_cast<std::size_t>(i);
    return a[j] * b[j];
  });
}

}  // namespace ibrl::par
