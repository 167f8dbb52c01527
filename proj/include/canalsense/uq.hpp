#pragma once

// Input distributions, pick-freeze designs and Sobol index estimation with
// asymptotic confidence intervals.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "canalsense/channel.hpp"
#include "canalsense/parallel.hpp"

namespace canalsense {

struct Distribution {
  enum class Kind { normal, uniform };
  Kind kind = Kind::normal;
  double a = 0.0;  ///< mean (normal) or lower bound (uniform)
  double b = 1.0;  ///< standard deviation (normal) or upper bound (uniform)

  [[nodiscard]] static Distribution normal(double mean, double sd) { return {Kind::normal, mean, sd}; }
  [[nodiscard]] static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }

  /// Throws ConfigError for sd <= 0 or lo >= hi.
  void validate() const;
  /// Inverse CDF at u in (0, 1).
  [[nodiscard]] double quantile(double u) const;
  [[nodiscard]] double mean() const;
  friend bool operator==(const Distribution&, const Distribution&) = default;
};

/// The nine input laws in PhysicalParams order.
[[nodiscard]] std::vector<Distribution> table1_distributions();

/// Row-major n x p, one parameter vector per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Independent random streams derived from one seed. Each (stream, column)
/// pair has its own generator, so draws do not depend on evaluation order.
enum class SampleStream : std::uint64_t {
  design_first = 1,
  design_second = 2,
  snapshots = 3,
  validation = 4,
  certification = 5,
};

/// n x p sample, column j drawn from specs[j] with its own generator.
[[nodiscard]] SampleMatrix sample_matrix(const std::vector<Distribution>& specs, std::size_t n, std::uint64_t seed,
                                         SampleStream stream);

struct PickFreezeDesign {
  SampleMatrix M1;
  SampleMatrix M2;
};

/// Two independent n x p samples. Throws std::invalid_argument for n < 2.
[[nodiscard]] PickFreezeDesign sample_parameters(const std::vector<Distribution>& specs, std::size_t n,
                                                 std::uint64_t seed);

[[nodiscard]] PhysicalParams params_from_row(std::span<const double> row);

/// 0-based parameter indices.
using IndexSet = std::vector<std::size_t>;

[[nodiscard]] IndexSet complement(const IndexSet& u, std::size_t p);

/// Columns in u from M1, the others from M2.
[[nodiscard]] SampleMatrix pick_freeze_mix(const SampleMatrix& M1, const SampleMatrix& M2, const IndexSet& u);

/// Symmetrized pick-freeze estimate of the closed index of u from outputs at
/// M1 and at the mixed sample. Throws NumericalError if the outputs are constant.
[[nodiscard]] double estimate_closed(std::span<const double> Y1, std::span<const double> Y2u);

/// Plug-in estimate of the asymptotic standard deviation of estimate_closed.
[[nodiscard]] double asymptotic_variance(std::span<const double> Y1, std::span<const double> Y2u, double s_hat);

/// Standard normal quantile, |error| below 1e-12 on (0, 1).
[[nodiscard]] double normal_quantile(double p);

struct Interval {
  double lo;
  double hi;
};

[[nodiscard]] Interval confidence_interval(double s_hat, double v_hat, std::size_t n, double level);

struct SobolEstimate {
  IndexSet u;            ///< the set whose closed index was estimated
  double s_closed = 0.0;
  double value = 0.0;    ///< first-order (u = {i}) or total (u = {i}^c) index
  double v_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n = 0;
  double level = 0.0;

  [[nodiscard]] bool out_of_range() const { return value < 0.0 || value > 1.0; }
};

/// First-order and total estimates from one design.
[[nodiscard]] SobolEstimate first_order_estimate(std::size_t i, std::span<const double> Y1,
                                                 std::span<const double> Y_first, double level);
[[nodiscard]] SobolEstimate total_estimate(std::size_t i, std::size_t p, std::span<const double> Y1,
                                           std::span<const double> Y_total, double level);

using Evaluator = std::function<double(std::span<const double>)>;

struct SensitivityResult {
  std::vector<SobolEstimate> first;
  std::vector<SobolEstimate> total;
  std::size_t n = 0;
  double level = 0.0;
  std::size_t evaluations = 0;
};

/// Evaluates the model on M1 and on the 2p mixed samples ({i} and {i}^c),
/// n (1 + 2p) calls in total, and assembles first-order and total indices.
[[nodiscard]] SensitivityResult run_sensitivity(const Evaluator& f, const std::vector<Distribution>& specs,
                                                std::size_t n, std::uint64_t seed, double level,
                                                const Execution& exec = {});

/// CSV `param,first,first_lo,first_hi,total,total_lo,total_hi,vhat_first,vhat_total,n,level`.
void write_index_csv(std::ostream& os, const SensitivityResult& result, const std::vector<std::string>& names);

/// Whitespace-separated `index name estimate lo hi` rows for plotting.
void write_index_plot_data(std::ostream& os, const std::vector<SobolEstimate>& estimates,
                           const std::vector<std::string>& names);

}  // namespace canalsense
