#pragma once

// Implicit upwind discretization of the linearized characteristic system on
// a space-time grid. The whole trajectory is one vector; the global operator
// is kept in affine form A(mu) = sum_q theta_q(mu) A_q so that the reduced
// basis module can project the terms once.
//
// Unknown layout is time-major: for step k the block
//   [xi1(1..Nx, k), xi2(1..Nx, k)]
// occupies entries [2 Nx k, 2 Nx (k + 1)).

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <vector>

#include "canalsense/channel.hpp"

namespace canalsense {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Grid {
  int Nx = 0;
  int Nt = 0;
  double dx = 0.0;
  double dt = 0.0;
  double L = 0.0;
  double T_star = 0.0;

  [[nodiscard]] std::size_t step_size() const { return 2 * static_cast<std::size_t>(Nx); }
  [[nodiscard]] std::size_t unknowns() const { return step_size() * static_cast<std::size_t>(Nt + 1); }
  /// component 0 is xi1, component 1 is xi2; i is 0-based.
  [[nodiscard]] std::size_t index(int k, int component, int i) const {
    return step_size() * static_cast<std::size_t>(k) + static_cast<std::size_t>(component * Nx + i);
  }
  [[nodiscard]] double x(int i) const { return dx * i; }
  [[nodiscard]] double t(int k) const { return dt * k; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Throws ConfigError unless dx divides L and dt divides T_star.
[[nodiscard]] Grid build_grid(double L, double T_star, double dx, double dt);

/// Everything the discrete system depends on for one parameter value.
struct SchemeCoefficients {
  double lambda_1;
  double lambda_2;
  double gamma;
  double delta;
  double w0;
  double wL;
  double A_coef;
  double C_coef;
  double xi1_0;
  double xi2_0;
};

[[nodiscard]] SchemeCoefficients scheme_coefficients(const Equilibrium& eq, const BoundaryCoefficients& bc,
                                                     double xi1_0, double xi2_0);
[[nodiscard]] SchemeCoefficients scheme_coefficients(const PhysicalParams& mu, const NominalConfig& cfg);

inline constexpr std::size_t kOperatorTerms = 7;
inline constexpr std::size_t kRhsTerms = 4;

/// theta_q for the operator terms, in the order (1, lambda_1, lambda_2, gamma, delta, w0, wL).
[[nodiscard]] std::array<double, kOperatorTerms> operator_weights(const SchemeCoefficients& c);
/// Weights of the rhs terms, in the order (xi1_0, xi2_0, A, C).
[[nodiscard]] std::array<double, kRhsTerms> rhs_weights(const SchemeCoefficients& c);

/// Parameter-independent pieces A_q and b_q of the space-time system.
class AffineTerms {
 public:
  explicit AffineTerms(const Grid& grid);

  [[nodiscard]] const Grid& grid() const { return grid_; }
  [[nodiscard]] const std::vector<SparseMatrix>& operators() const { return operators_; }
  [[nodiscard]] const std::vector<Eigen::VectorXd>& rhs() const { return rhs_; }

 private:
  Grid grid_;
  std::vector<SparseMatrix> operators_;
  std::vector<Eigen::VectorXd> rhs_;
};

struct SpaceTimeSystem {
  std::shared_ptr<const AffineTerms> terms;
  SchemeCoefficients coefficients;

  [[nodiscard]] const Grid& grid() const { return terms->grid(); }
  [[nodiscard]] SparseMatrix matrix() const;
  [[nodiscard]] Eigen::VectorXd rhs() const;
  /// A(mu) x without forming A(mu).
  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

[[nodiscard]] SpaceTimeSystem assemble(const Equilibrium& eq, const BoundaryCoefficients& bc, const Grid& grid,
                                       double xi1_0, double xi2_0);
[[nodiscard]] SpaceTimeSystem assemble(std::shared_ptr<const AffineTerms> terms, const SchemeCoefficients& c);

struct StateTrajectory {
  Grid grid;
  Eigen::VectorXd xi;

  [[nodiscard]] double xi1(int k, int i) const { return xi[static_cast<Eigen::Index>(grid.index(k, 0, i))]; }
  [[nodiscard]] double xi2(int k, int i) const { return xi[static_cast<Eigen::Index>(grid.index(k, 1, i))]; }
  /// Euclidean norm of the step-k block (both components).
  [[nodiscard]] double step_norm(int k) const;
};

/// Solver for A(mu) exploiting the block lower-bidiagonal structure in time:
/// the step matrix is the same for every k >= 1 and is factorized once.
class BlockTimeSolver {
 public:
  /// `with_transpose` additionally factorizes the transposed blocks so that
  /// solve_transpose is available.
  explicit BlockTimeSolver(const SpaceTimeSystem& sys, bool with_transpose = false);

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// Solves A(mu)^T z = y. Throws std::logic_error unless built with_transpose.
  [[nodiscard]] Eigen::VectorXd solve_transpose(const Eigen::VectorXd& y) const;

 private:
  Grid grid_;
  SparseMatrix initial_;
  SparseMatrix coupling_;
  Eigen::SparseLU<SparseMatrix> step_lu_;
  Eigen::SparseLU<SparseMatrix> initial_lu_;
  bool has_transpose_ = false;
  Eigen::SparseLU<SparseMatrix> step_lu_t_;
  Eigen::SparseLU<SparseMatrix> initial_lu_t_;
};

[[nodiscard]] StateTrajectory solve_full(const SpaceTimeSystem& sys);

/// sqrt of the sum of squares over every grid point and every step, k = 0..Nt.
[[nodiscard]] double discrete_output(const StateTrajectory& traj);

/// Full-order parametric model bound to one configuration and grid.
class FullModel {
 public:
  FullModel(NominalConfig cfg, const Grid& grid);

  [[nodiscard]] SpaceTimeSystem system(const PhysicalParams& mu) const;
  [[nodiscard]] StateTrajectory trajectory(const PhysicalParams& mu) const;
  [[nodiscard]] double operator()(const PhysicalParams& mu) const;

  [[nodiscard]] const NominalConfig& config() const { return cfg_; }
  [[nodiscard]] const Grid& grid() const { return terms_->grid(); }
  [[nodiscard]] const std::shared_ptr<const AffineTerms>& terms() const { return terms_; }

 private:
  NominalConfig cfg_;
  std::shared_ptr<const AffineTerms> terms_;
};

[[nodiscard]] double evaluate(const PhysicalParams& mu, const NominalConfig& cfg, const Grid& grid);

/// CSV `t,x,xi1,xi2,h,v`, one row per (k, i); h and v use the equilibrium depth H_star.
void write_trajectory_csv(std::ostream& os, const StateTrajectory& traj, double H_star, double g);

}  // namespace canalsense
