#include "canalsense/pde.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "canalsense/errors.hpp"
#include "canalsense/io.hpp"

namespace canalsense {

namespace {

using Triplet = Eigen::Triplet<double>;

// Operator term slots.
enum Term : std::size_t { kOne = 0, kLambda1, kLambda2, kGamma, kDelta, kW0, kWL };
// Rhs term slots.
enum RhsTerm : std::size_t { kXi1Initial = 0, kXi2Initial, kUpstream, kDownstream };

int checked_steps(double length, double step, const char* what) {
  if (!(length > 0.0) || !(step > 0.0)) throw ConfigError(std::string(what) + ": length and step must be positive");
  const double ratio = length / step;
  const double count = std::round(ratio);
  if (count < 1.0 || std::abs(ratio - count) > 1e-9 * ratio) {
    std::ostringstream os;
    os << what << ": step " << step << " does not divide " << length;
    throw ConfigError(os.str());
  }
  return static_cast<int>(count);
}

SparseMatrix extract_block(const SparseMatrix& A, Eigen::Index row0, Eigen::Index col0, Eigen::Index n) {
  std::vector<Triplet> entries;
  for (Eigen::Index col = col0; col < col0 + n; ++col) {
    for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
      if (it.row() >= row0 && it.row() < row0 + n) entries.emplace_back(it.row() - row0, col - col0, it.value());
    }
  }
  SparseMatrix block(n, n);
  block.setFromTriplets(entries.begin(), entries.end());
  return block;
}

void factorize(Eigen::SparseLU<SparseMatrix>& lu, const SparseMatrix& m, const char* which) {
  lu.analyzePattern(m);
  lu.factorize(m);
  if (lu.info() != Eigen::Success) {
    throw NumericalError(std::string("singular ") + which + " matrix: " + lu.lastErrorMessage());
  }
}

}  // namespace

Grid build_grid(double L, double T_star, double dx, double dt) {
  Grid grid;
  grid.Nx = checked_steps(L, dx, "space grid");
  grid.Nt = checked_steps(T_star, dt, "time grid");
  if (grid.Nx < 2) throw ConfigError("space grid: need at least 2 points");
  grid.L = L;
  grid.T_star = T_star;
  grid.dx = L / grid.Nx;
  grid.dt = T_star / grid.Nt;
  return grid;
}

SchemeCoefficients scheme_coefficients(const Equilibrium& eq, const BoundaryCoefficients& bc, double xi1_0,
                                       double xi2_0) {
  return {eq.lambda_1, eq.lambda_2, eq.gamma, eq.delta, bc.w0, bc.wL, bc.A_coef, bc.C_coef, xi1_0, xi2_0};
}

SchemeCoefficients scheme_coefficients(const PhysicalParams& mu, const NominalConfig& cfg) {
  const Equilibrium eq = compute_equilibrium(mu, cfg);
  const BoundaryCoefficients bc = boundary_coefficients(mu, cfg);
  return scheme_coefficients(eq, bc, mu.xi1_0, mu.xi2_0);
}

std::array<double, kOperatorTerms> operator_weights(const SchemeCoefficients& c) {
  return {1.0, c.lambda_1, c.lambda_2, c.gamma, c.delta, c.w0, c.wL};
}

std::array<double, kRhsTerms> rhs_weights(const SchemeCoefficients& c) {
  return {c.xi1_0, c.xi2_0, c.A_coef, c.C_coef};
}

AffineTerms::AffineTerms(const Grid& grid) : grid_(grid) {
  const auto n = static_cast<Eigen::Index>(grid.unknowns());
  const int Nx = grid.Nx;
  const double inv_dt = 1.0 / grid.dt;
  const double inv_dx = 1.0 / grid.dx;

  std::array<std::vector<Triplet>, kOperatorTerms> entries;
  auto add = [&](Term term, std::size_t row, std::size_t col, double value) {
    entries[term].emplace_back(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col), value);
  };

  for (int i = 0; i < Nx; ++i) {
    add(kOne, grid.index(0, 0, i), grid.index(0, 0, i), 1.0);
    add(kOne, grid.index(0, 1, i), grid.index(0, 1, i), 1.0);
  }

  for (int k = 1; k <= grid.Nt; ++k) {
    // xi1 rows: boundary row at i = 0, upwind from the left elsewhere.
    {
      const std::size_t row = grid.index(k, 0, 0);
      add(kOne, row, grid.index(k, 0, 0), 1.0);
      add(kW0, row, grid.index(k, 0, 0), -1.0);
      add(kW0, row, grid.index(k, 1, 0), 1.0);
    }
    for (int i = 1; i < Nx; ++i) {
      const std::size_t row = grid.index(k, 0, i);
      add(kOne, row, grid.index(k, 0, i), inv_dt);
      add(kOne, row, grid.index(k - 1, 0, i), -inv_dt);
      add(kLambda1, row, grid.index(k, 0, i), inv_dx);
      add(kLambda1, row, grid.index(k, 0, i - 1), -inv_dx);
      add(kGamma, row, grid.index(k, 0, i), 1.0);
      add(kDelta, row, grid.index(k, 1, i), 1.0);
    }
    // xi2 rows: upwind from the right, boundary row at i = Nx - 1.
    for (int i = 0; i < Nx - 1; ++i) {
      const std::size_t row = grid.index(k, 1, i);
      add(kOne, row, grid.index(k, 1, i), inv_dt);
      add(kOne, row, grid.index(k - 1, 1, i), -inv_dt);
      add(kLambda2, row, grid.index(k, 1, i), inv_dx);
      add(kLambda2, row, grid.index(k, 1, i + 1), -inv_dx);
      add(kDelta, row, grid.index(k, 1, i), 1.0);
      add(kGamma, row, grid.index(k, 0, i), 1.0);
    }
    {
      const std::size_t row = grid.index(k, 1, Nx - 1);
      add(kOne, row, grid.index(k, 1, Nx - 1), 1.0);
      add(kWL, row, grid.index(k, 0, Nx - 1), -1.0);
      add(kWL, row, grid.index(k, 1, Nx - 1), 1.0);
    }
  }

  operators_.reserve(kOperatorTerms);
  for (auto& list : entries) {
    SparseMatrix m(n, n);
    m.setFromTriplets(list.begin(), list.end());
    m.makeCompressed();
    operators_.push_back(std::move(m));
  }

  rhs_.assign(kRhsTerms, Eigen::VectorXd::Zero(n));
  for (int i = 0; i < Nx; ++i) {
    rhs_[kXi1Initial][static_cast<Eigen::Index>(grid.index(0, 0, i))] = 1.0;
    rhs_[kXi2Initial][static_cast<Eigen::Index>(grid.index(0, 1, i))] = 1.0;
  }
  for (int k = 1; k <= grid.Nt; ++k) {
    rhs_[kUpstream][static_cast<Eigen::Index>(grid.index(k, 0, 0))] = 1.0;
    rhs_[kDownstream][static_cast<Eigen::Index>(grid.index(k, 1, Nx - 1))] = 1.0;
  }
}

SparseMatrix SpaceTimeSystem::matrix() const {
  const auto weights = operator_weights(coefficients);
  SparseMatrix A = weights[0] * terms->operators()[0];
  for (std::size_t q = 1; q < kOperatorTerms; ++q) A += weights[q] * terms->operators()[q];
  return A;
}

Eigen::VectorXd SpaceTimeSystem::rhs() const {
  const auto weights = rhs_weights(coefficients);
  Eigen::VectorXd b = weights[0] * terms->rhs()[0];
  for (std::size_t q = 1; q < kRhsTerms; ++q) b += weights[q] * terms->rhs()[q];
  return b;
}

Eigen::VectorXd SpaceTimeSystem::apply(const Eigen::VectorXd& x) const {
  const auto weights = operator_weights(coefficients);
  Eigen::VectorXd y = weights[0] * (terms->operators()[0] * x);
  for (std::size_t q = 1; q < kOperatorTerms; ++q) y += weights[q] * (terms->operators()[q] * x);
  return y;
}

SpaceTimeSystem assemble(const Equilibrium& eq, const BoundaryCoefficients& bc, const Grid& grid, double xi1_0,
                         double xi2_0) {
  return assemble(std::make_shared<const AffineTerms>(grid), scheme_coefficients(eq, bc, xi1_0, xi2_0));
}

SpaceTimeSystem assemble(std::shared_ptr<const AffineTerms> terms, const SchemeCoefficients& c) {
  return SpaceTimeSystem{std::move(terms), c};
}

double StateTrajectory::step_norm(int k) const {
  const auto size = static_cast<Eigen::Index>(grid.step_size());
  return xi.segment(size * k, size).norm();
}

BlockTimeSolver::BlockTimeSolver(const SpaceTimeSystem& sys, bool with_transpose)
    : grid_(sys.grid()), has_transpose_(with_transpose) {
  const SparseMatrix A = sys.matrix();
  const auto n = static_cast<Eigen::Index>(grid_.step_size());
  initial_ = extract_block(A, 0, 0, n);
  factorize(initial_lu_, initial_, "initial-step");
  if (with_transpose) factorize(initial_lu_t_, SparseMatrix(initial_.transpose()), "initial-step");
  if (grid_.Nt >= 1) {
    coupling_ = extract_block(A, n, 0, n);
    const SparseMatrix step = extract_block(A, n, n, n);
    factorize(step_lu_, step, "time-step");
    if (with_transpose) factorize(step_lu_t_, SparseMatrix(step.transpose()), "time-step");
  }
}

Eigen::VectorXd BlockTimeSolver::solve(const Eigen::VectorXd& b) const {
  const auto n = static_cast<Eigen::Index>(grid_.step_size());
  Eigen::VectorXd x(b.size());
  x.head(n) = initial_lu_.solve(b.head(n));
  for (int k = 1; k <= grid_.Nt; ++k) {
    const Eigen::VectorXd local = b.segment(n * k, n) - coupling_ * x.segment(n * (k - 1), n);
    x.segment(n * k, n) = step_lu_.solve(local);
    if (!x.segment(n * k, n).allFinite()) {
      throw NumericalError("non-finite solution at time step " + std::to_string(k));
    }
  }
  return x;
}

Eigen::VectorXd BlockTimeSolver::solve_transpose(const Eigen::VectorXd& y) const {
  if (!has_transpose_) throw std::logic_error("BlockTimeSolver built without transposed factors");
  const auto n = static_cast<Eigen::Index>(grid_.step_size());
  Eigen::VectorXd z(y.size());
  const int Nt = grid_.Nt;
  if (Nt >= 1) {
    z.segment(n * Nt, n) = step_lu_t_.solve(y.segment(n * Nt, n));
    for (int k = Nt - 1; k >= 1; --k) {
      const Eigen::VectorXd local = y.segment(n * k, n) - coupling_.transpose() * z.segment(n * (k + 1), n);
      z.segment(n * k, n) = step_lu_t_.solve(local);
    }
    const Eigen::VectorXd local = y.head(n) - coupling_.transpose() * z.segment(n, n);
    z.head(n) = initial_lu_t_.solve(local);
  } else {
    z.head(n) = initial_lu_t_.solve(y.head(n));
  }
  return z;
}

StateTrajectory solve_full(const SpaceTimeSystem& sys) {
  const BlockTimeSolver solver(sys);
  return StateTrajectory{sys.grid(), solver.solve(sys.rhs())};
}

double discrete_output(const StateTrajectory& traj) { return traj.xi.norm(); }

FullModel::FullModel(NominalConfig cfg, const Grid& grid)
    : cfg_(std::move(cfg)), terms_(std::make_shared<const AffineTerms>(grid)) {}

SpaceTimeSystem FullModel::system(const PhysicalParams& mu) const {
  return assemble(terms_, scheme_coefficients(mu, cfg_));
}

StateTrajectory FullModel::trajectory(const PhysicalParams& mu) const { return solve_full(system(mu)); }

double FullModel::operator()(const PhysicalParams& mu) const { return discrete_output(trajectory(mu)); }

double evaluate(const PhysicalParams& mu, const NominalConfig& cfg, const Grid& grid) {
  return FullModel(cfg, grid)(mu);
}

void write_trajectory_csv(std::ostream& os, const StateTrajectory& traj, double H_star, double g) {
  const Grid& grid = traj.grid;
  os << "t,x,xi1,xi2,h,v\n";
  for (int k = 0; k <= grid.Nt; ++k) {
    for (int i = 0; i < grid.Nx; ++i) {
      const double xi1 = traj.xi1(k, i);
      const double xi2 = traj.xi2(k, i);
      const auto [h, v] = from_characteristic(xi1, xi2, H_star, g);
      os << fmt_double(grid.t(k)) << ',' << fmt_double(grid.x(i)) << ',' << fmt_double(xi1) << ','
         << fmt_double(xi2) << ',' << fmt_double(h) << ',' << fmt_double(v) << '\n';
    }
  }
}

}  // namespace canalsense
