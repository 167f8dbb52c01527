#include "canalsense/parallel.hpp"

#include <stdexcept>

namespace canalsense {

int resolved_threads(const Execution& exec) {
  if (exec.serial) return 1;
  return exec.threads > 0 ? exec.threads : omp_get_max_threads();
}

namespace {

void check_shape(std::span<const double> rows, std::size_t p) {
  if (p == 0 || rows.size() % p != 0) throw std::invalid_argument("row block size is not a multiple of p");
}

}  // namespace

std::vector<double> evaluate_rows_serial(std::span<const double> rows, std::size_t p, const RowFunction& f) {
  check_shape(rows, p);
  std::vector<double> out(rows.size() / p);
  for_each_index_serial(out.size(), [&](std::size_t j) { out[j] = f(rows.subspan(j * p, p)); });
  return out;
}

std::vector<double> evaluate_rows_parallel(std::span<const double> rows, std::size_t p, const RowFunction& f,
                                           int threads) {
  check_shape(rows, p);
  std::vector<double> out(rows.size() / p);
  for_each_index_parallel(out.size(), [&](std::size_t j) { out[j] = f(rows.subspan(j * p, p)); }, threads);
  return out;
}

std::vector<double> evaluate_rows(std::span<const double> rows, std::size_t p, const RowFunction& f,
                                  const Execution& exec) {
  return exec.serial ? evaluate_rows_serial(rows, p, f) : evaluate_rows_parallel(rows, p, f, exec.threads);
}

}  // namespace canalsense
