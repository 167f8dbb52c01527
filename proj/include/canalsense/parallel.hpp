#pragma once

// Index-parallel loops used by the Monte-Carlo and snapshot kernels. Every
// loop body writes only to storage addressed by its own index, so results do
// not depend on the schedule or the thread count. The serial variants are the
// reference the parallel ones are tested against.

#include <omp.h>

#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace canalsense {

struct Execution {
  bool serial = false;
  int threads = 0;  ///< 0 uses the OpenMP default

  [[nodiscard]] static Execution serial_reference() { return {true, 1}; }
  [[nodiscard]] static Execution with_threads(int n) { return {false, n}; }
};

/// Threads the parallel loops would use under `exec`.
[[nodiscard]] int resolved_threads(const Execution& exec);

template <class Fn>
void for_each_index_serial(std::size_t count, Fn&& fn) {
  for (std::size_t i = 0; i < count; ++i) fn(i);
}

/// Runs fn(i) for i in [0, count) on an OpenMP team. If bodies throw, the
/// exception of the lowest failing index is rethrown after the loop, which
/// is the one the serial loop would have reported.
template <class Fn>
void for_each_index_parallel(std::size_t count, Fn&& fn, int threads) {
  const auto n = static_cast<long long>(count);
  std::exception_ptr first_error;
  long long first_index = std::numeric_limits<long long>::max();
  const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(team)
  for (long long i = 0; i < n; ++i) {
    // Indices past a recorded failure are skipped; lower ones still run so the
    // reported error does not depend on the schedule.
    long long failed_at;
#pragma omp atomic read
    failed_at = first_index;
    if (i > failed_at) continue;
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(canalsense_first_error)
      {
        if (i < first_index) {
#pragma omp atomic write
          first_index = i;
          first_error = std::current_exception();
        }
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

template <class Fn>
void for_each_index(std::size_t count, Fn&& fn, const Execution& exec) {
  if (exec.serial) {
    for_each_index_serial(count, std::forward<Fn>(fn));
  } else {
    for_each_index_parallel(count, std::forward<Fn>(fn), exec.threads);
  }
}

/// One scalar per row of a row-major n x p sample block.
using RowFunction = std::function<double(std::span<const double>)>;

[[nodiscard]] std::vector<double> evaluate_rows_serial(std::span<const double> rows, std::size_t p,
                                                       const RowFunction& f);
[[nodiscard]] std::vector<double> evaluate_rows_parallel(std::span<const double> rows, std::size_t p,
                                                         const RowFunction& f, int threads);
[[nodiscard]] std::vector<double> evaluate_rows(std::span<const double> rows, std::size_t p, const RowFunction& f,
                                                const Execution& exec);

}  // namespace canalsense
