#pragma once

// Space-time reduced basis: POD of full trajectories, Galerkin projection of
// the affine terms, a residual-based error bound and the calibration of the
// basis size against the Monte-Carlo sample size.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "canalsense/parallel.hpp"
#include "canalsense/pde.hpp"
#include "canalsense/uq.hpp"

namespace canalsense {

struct SnapshotSet {
  Grid grid;
  std::vector<PhysicalParams> params;
  Eigen::MatrixXd matrix;  ///< one trajectory per column

  [[nodiscard]] std::size_t count() const { return params.size(); }
};

/// Full solves at `count` parameter draws from `specs`.
[[nodiscard]] SnapshotSet collect_snapshots(const FullModel& model, const std::vector<Distribution>& specs,
                                            std::size_t count, std::uint64_t seed, const Execution& exec = {});

/// Snapshots at given parameter values, in order.
[[nodiscard]] SnapshotSet collect_snapshots(const FullModel& model, const std::vector<PhysicalParams>& params,
                                            const Execution& exec = {});

/// Left singular vectors of a snapshot matrix, all of them up to its rank.
struct PodModes {
  Eigen::MatrixXd U;
  Eigen::VectorXd sigma;  ///< every singular value, including those past the rank
  std::size_t rank = 0;
};

/// Numerical rank uses the threshold sigma_1 * max(N, count) * machine epsilon.
[[nodiscard]] PodModes compute_pod(const SnapshotSet& snapshots);

/// Values identifying the grid and configuration a basis was built for.
[[nodiscard]] std::vector<double> model_fingerprint(const FullModel& model);

class ReducedBasis {
 public:
  /// Projects the affine terms of `model` onto the first m modes.
  /// Throws NumericalError when m is 0 or exceeds the numerical rank.
  ReducedBasis(const FullModel& model, const PodModes& modes, std::size_t m);

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(Z_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& Z() const { return Z_; }
  [[nodiscard]] const std::vector<Eigen::MatrixXd>& reduced_operators() const { return ops_; }
  [[nodiscard]] const std::vector<Eigen::VectorXd>& reduced_rhs() const { return rhs_; }
  [[nodiscard]] const Eigen::VectorXd& singular_values() const { return sigma_; }
  [[nodiscard]] const std::vector<double>& fingerprint() const { return fingerprint_; }
  [[nodiscard]] const NominalConfig& config() const { return cfg_; }
  [[nodiscard]] const std::shared_ptr<const AffineTerms>& terms() const { return terms_; }

  /// The nested basis made of the first m columns; the projected terms are
  /// leading blocks of the current ones, so nothing is recomputed.
  [[nodiscard]] ReducedBasis truncated(std::size_t m) const;

  /// Binary layout after the ASCII line `rb-basis v1 <N> <m> <Q>`, all
  /// integers uint64 and all reals float64, little-endian:
  ///   fingerprint length F, F reals; rhs term count R;
  ///   Z (N x m, row-major); Q operators (m x m, row-major); R rhs vectors (m);
  ///   singular value count S, S reals.
  void save(std::ostream& os) const;
  /// Throws ValidationError when the file is malformed or was built for a
  /// different grid or configuration than `model`.
  [[nodiscard]] static ReducedBasis load(std::istream& is, const FullModel& model);

  /// For fault-injection checks only.
  Eigen::MatrixXd& mutable_Z() { return Z_; }

 private:
  ReducedBasis() = default;

  NominalConfig cfg_;
  std::shared_ptr<const AffineTerms> terms_;
  Eigen::MatrixXd Z_;
  std::vector<Eigen::MatrixXd> ops_;
  std::vector<Eigen::VectorXd> rhs_;
  Eigen::VectorXd sigma_;
  std::vector<double> fingerprint_;
};

/// POD of the snapshots truncated to m modes.
[[nodiscard]] ReducedBasis pod(const FullModel& model, const SnapshotSet& snapshots, std::size_t m);

/// Reduced coordinates of the trajectory at mu. Throws NumericalError when the
/// reduced matrix is singular to working precision.
[[nodiscard]] Eigen::VectorXd solve_reduced(const ReducedBasis& rb, const PhysicalParams& mu);

/// Reduced output, the norm of the reduced coordinates.
[[nodiscard]] double reduced_output(const ReducedBasis& rb, const PhysicalParams& mu);

struct ErrorBound {
  double rho = 0.0;
  double alpha = 0.0;
  double bound = 0.0;
  int iterations = 0;
};

struct StabilityOptions {
  double tolerance = 1e-8;
  int max_iterations = 2000;
};

/// Smallest singular value of A(mu) by inverse power iteration on A^T A.
/// Throws NumericalError if the iteration does not settle.
[[nodiscard]] double smallest_singular_value(const SpaceTimeSystem& sys, const StabilityOptions& opts = {},
                                             int* iterations = nullptr);

[[nodiscard]] ErrorBound error_bound(const ReducedBasis& rb, const PhysicalParams& mu,
                                     const Eigen::VectorXd& xi_tilde, const StabilityOptions& opts = {});

/// Raw basis-size rule -log(n c log log n) / log q.
[[nodiscard]] double m_rule_raw(double n, double c, double q);
/// Smallest integer basis size satisfying the rule.
[[nodiscard]] std::size_t m_rule(double n, double c, double q);

struct CalibrationModel {
  std::vector<std::size_t> m_values;
  std::vector<double> var_delta;
  double c = 0.0;
  double q = 0.0;
  std::size_t validation_count = 0;

  [[nodiscard]] double raw_m(double n) const { return m_rule_raw(n, c, q); }
  [[nodiscard]] std::size_t recommended_m(double n) const { return m_rule(n, c, q); }
};

/// Least-squares fit of log var = log c + m log q. Throws NumericalError when
/// the fitted q is not in (0, 1).
[[nodiscard]] CalibrationModel fit_calibration(const std::vector<std::size_t>& m_values,
                                               const std::vector<double>& var_delta);

/// Empirical variance of reduced minus full output over a fresh validation
/// sample, for each m of `m_values` using nested truncations of `rb`.
[[nodiscard]] CalibrationModel calibrate(const FullModel& model, const ReducedBasis& rb,
                                         const std::vector<Distribution>& specs,
                                         const std::vector<std::size_t>& m_values, std::size_t validation_count,
                                         std::uint64_t seed, const Execution& exec = {});

}  // namespace canalsense
