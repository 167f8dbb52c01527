#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "canalsense/errors.hpp"
#include "canalsense/parallel.hpp"
#include "canalsense/pde.hpp"
#include "canalsense/uq.hpp"

using namespace canalsense;

TEST_CASE("every index is visited exactly once") {
  for (int threads : {1, 2, 5}) {
    std::vector<std::atomic<int>> hits(1000);
    for_each_index_parallel(hits.size(), [&](std::size_t i) { hits[i]++; }, threads);
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  int calls = 0;
  for_each_index_parallel(0, [&](std::size_t) { ++calls; }, 3);
  CHECK(calls == 0);
}

TEST_CASE("parallel row evaluation equals the serial reference") {
  std::vector<double> rows(3 * 517);
  std::iota(rows.begin(), rows.end(), 0.0);
  const RowFunction f = [](std::span<const double> r) { return std::sin(r[0]) * r[1] - std::sqrt(r[2]); };
  const auto serial = evaluate_rows_serial(rows, 3, f);
  REQUIRE(serial.size() == 517);
  CHECK(serial[2] == f(std::span<const double>(rows).subspan(6, 3)));
  for (int threads : {1, 2, 4, 7}) CHECK(evaluate_rows_parallel(rows, 3, f, threads) == serial);
  CHECK(evaluate_rows(rows, 3, f, Execution::serial_reference()) == serial);
  CHECK_THROWS_AS((void)evaluate_rows_serial(std::span<const double>(rows).first(4), 3, f), std::invalid_argument);
}

TEST_CASE("the lowest failing index is reported whatever the schedule") {
  auto body = [](std::size_t i) {
    if (i % 97 == 13) throw DomainError("failed at " + std::to_string(i));
  };
  for (int threads : {1, 2, 4}) {
    try {
      for_each_index_parallel(2000, body, threads);
      FAIL("expected an error");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()) == "failed at 13");
    }
  }
  CHECK_THROWS_WITH(for_each_index_serial(2000, body), "failed at 13");
}

TEST_CASE("full-model outputs are identical under serial and threaded evaluation") {
  const FullModel model(NominalConfig{}, build_grid(250, 75, 5, 5));
  const SampleMatrix M = sample_matrix(table1_distributions(), 40, 9, SampleStream::validation);
  const std::span<const double> rows(M.data(), static_cast<std::size_t>(M.size()));
  const RowFunction f = [&](std::span<const double> r) { return model(params_from_row(r)); };
  const auto serial = evaluate_rows(rows, kNumParams, f, Execution::serial_reference());
  const auto threaded = evaluate_rows(rows, kNumParams, f, Execution::with_threads(3));
  CHECK(serial == threaded);
}

TEST_CASE("thread count resolution") {
  CHECK(resolved_threads(Execution::serial_reference()) == 1);
  CHECK(resolved_threads(Execution::with_threads(6)) == 6);
  CHECK(resolved_threads(Execution{}) >= 1);
}
