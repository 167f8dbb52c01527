#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "canalsense/errors.hpp"
#include "canalsense/pde.hpp"

using namespace canalsense;

namespace {

// Entry-by-entry assembly straight from the recurrences, independent of the
// affine term bookkeeping.
Eigen::MatrixXd direct_matrix(const Grid& g, const SchemeCoefficients& c) {
  const auto n = static_cast<Eigen::Index>(g.unknowns());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  auto at = [&](int k, int comp, int i) { return static_cast<Eigen::Index>(g.index(k, comp, i)); };
  for (int i = 0; i < g.Nx; ++i) {
    A(at(0, 0, i), at(0, 0, i)) = 1;
    A(at(0, 1, i), at(0, 1, i)) = 1;
  }
  for (int k = 1; k <= g.Nt; ++k) {
    A(at(k, 0, 0), at(k, 0, 0)) = 1 - c.w0;
    A(at(k, 0, 0), at(k, 1, 0)) = c.w0;
    for (int i = 1; i < g.Nx; ++i) {
      const auto r = at(k, 0, i);
      A(r, at(k, 0, i)) = 1 / g.dt + c.lambda_1 / g.dx + c.gamma;
      A(r, at(k, 0, i - 1)) = -c.lambda_1 / g.dx;
      A(r, at(k, 1, i)) = c.delta;
      A(r, at(k - 1, 0, i)) = -1 / g.dt;
    }
    for (int i = 0; i < g.Nx - 1; ++i) {
      const auto r = at(k, 1, i);
      A(r, at(k, 1, i)) = 1 / g.dt + c.lambda_2 / g.dx + c.delta;
      A(r, at(k, 1, i + 1)) = -c.lambda_2 / g.dx;
      A(r, at(k, 0, i)) = c.gamma;
      A(r, at(k - 1, 1, i)) = -1 / g.dt;
    }
    const int last = g.Nx - 1;
    A(at(k, 1, last), at(k, 0, last)) = -c.wL;
    A(at(k, 1, last), at(k, 1, last)) = 1 + c.wL;
  }
  return A;
}

Eigen::VectorXd direct_rhs(const Grid& g, const SchemeCoefficients& c) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.unknowns()));
  for (int i = 0; i < g.Nx; ++i) {
    b[static_cast<Eigen::Index>(g.index(0, 0, i))] = c.xi1_0;
    b[static_cast<Eigen::Index>(g.index(0, 1, i))] = c.xi2_0;
  }
  for (int k = 1; k <= g.Nt; ++k) {
    b[static_cast<Eigen::Index>(g.index(k, 0, 0))] = c.A_coef;
    b[static_cast<Eigen::Index>(g.index(k, 1, g.Nx - 1))] = c.C_coef;
  }
  return b;
}

PhysicalParams draw(std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhysicalParams p;
  p.h_s = 4 + 0.03 * z(rng);
  p.B = 80 + 1.03 * z(rng);
  p.S_b = 2e-4 + 2.5e-6 * z(rng);
  p.C = 9e-4 + 2e-4 * u(rng);
  p.z_up = 10 + 0.13 * z(rng);
  p.xi1_0 = -0.01 + 0.02 * u(rng);
  p.xi2_0 = -0.01 + 0.02 * u(rng);
  p.mu_0 = 0.65 + 0.0066 * z(rng);
  p.mu_L = 0.65 + 0.0066 * z(rng);
  return p;
}

Grid paper_grid() { return build_grid(250, 75, 5, 5); }

}  // namespace

TEST_CASE("grid construction") {
  const Grid g = paper_grid();
  CHECK(g.Nx == 50);
  CHECK(g.Nt == 15);
  CHECK(g.unknowns() == 1600);
  CHECK(std::abs(g.dx * g.Nx - g.L) <= 1e-12);
  CHECK(std::abs(g.dt * g.Nt - g.T_star) <= 1e-12);

  const Grid tiny = build_grid(10, 1, 5, 1);
  CHECK(tiny.Nx == 2);
  CHECK(tiny.Nt == 1);
  CHECK(tiny.unknowns() == 8);

  CHECK_THROWS_AS((void)build_grid(250, 75, 7, 5), ConfigError);
  CHECK_THROWS_AS((void)build_grid(250, 75, 5, 4), ConfigError);
  CHECK_THROWS_AS((void)build_grid(5, 75, 5, 5), ConfigError);
}

TEST_CASE("affine assembly matches direct assembly") {
  const Grid g = build_grid(50, 20, 5, 5);
  const NominalConfig cfg;
  const FullModel model(cfg, g);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const SpaceTimeSystem sys = model.system(draw(rng));
    const Eigen::MatrixXd affine = Eigen::MatrixXd(sys.matrix());
    const Eigen::MatrixXd direct = direct_matrix(g, sys.coefficients);
    CHECK((affine - direct).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((sys.rhs() - direct_rhs(g, sys.coefficients)).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(g.unknowns()), -1, 1);
    CHECK((sys.apply(x) - direct * x).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("operator is block lower triangular in time") {
  const Grid g = build_grid(20, 15, 5, 5);
  const FullModel model(NominalConfig{}, g);
  const Eigen::MatrixXd A = Eigen::MatrixXd(model.system(NominalConfig{}.nominal).matrix());
  const auto n = static_cast<Eigen::Index>(g.step_size());
  for (int k = 0; k <= g.Nt; ++k) {
    for (int j = k + 1; j <= g.Nt; ++j) {
      CHECK(A.block(n * k, n * j, n, n).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("smallest grid step solved by hand") {
  const Grid g = build_grid(10, 1, 5, 1);
  SchemeCoefficients c{};
  c.lambda_1 = 4.0;
  c.lambda_2 = 3.0;
  c.gamma = 0.1;
  c.delta = 0.2;
  c.w0 = -1.5;
  c.wL = 2.0;
  c.A_coef = 0.3;
  c.C_coef = -0.4;
  c.xi1_0 = 0.5;
  c.xi2_0 = -0.25;
  const StateTrajectory traj = solve_full(assemble(std::make_shared<const AffineTerms>(g), c));

  // Unknowns of step 1: (a, b) = xi1 at i = 1, 2 and (p, q) = xi2 at i = 1, 2.
  //   (1 - w0) a + w0 p                              = A
  //   -(l1/dx) a + (1/dt + l1/dx + gamma) b + delta q = xi1_0 / dt
  //   gamma a + (1/dt + l2/dx + delta) p - (l2/dx) q  = xi2_0 / dt
  //   -wL b + (1 + wL) q                             = C
  double m[4][5] = {
      {1 - c.w0, 0, c.w0, 0, c.A_coef},
      {-c.lambda_1 / 5, 1 + c.lambda_1 / 5 + c.gamma, 0, c.delta, c.xi1_0},
      {c.gamma, 0, 1 + c.lambda_2 / 5 + c.delta, -c.lambda_2 / 5, c.xi2_0},
      {0, -c.wL, 0, 1 + c.wL, c.C_coef},
  };
  // Gauss-Jordan elimination with partial pivoting.
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    for (int j = 0; j < 5; ++j) std::swap(m[col][j], m[pivot][j]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int j = 0; j < 5; ++j) m[r][j] -= f * m[col][j];
    }
  }
  const double a = m[0][4] / m[0][0];
  const double b = m[1][4] / m[1][1];
  const double p = m[2][4] / m[2][2];
  const double q = m[3][4] / m[3][3];

  CHECK(traj.xi1(0, 0) == 0.5);
  CHECK(traj.xi2(0, 1) == -0.25);
  CHECK(traj.xi1(1, 0) == doctest::Approx(a).epsilon(1e-12));
  CHECK(traj.xi1(1, 1) == doctest::Approx(b).epsilon(1e-12));
  CHECK(traj.xi2(1, 0) == doctest::Approx(p).epsilon(1e-12));
  CHECK(traj.xi2(1, 1) == doctest::Approx(q).epsilon(1e-12));
}

TEST_CASE("sequential time stepping equals the monolithic solve") {
  const Grid g = build_grid(10, 2, 5, 1);
  PhysicalParams mu;
  mu.xi1_0 = 0.01;
  mu.xi2_0 = -0.004;
  mu.C = 1.07e-3;
  const FullModel model(NominalConfig{}, g);
  const SpaceTimeSystem sys = model.system(mu);
  const Eigen::VectorXd mono = Eigen::MatrixXd(sys.matrix()).fullPivLu().solve(sys.rhs());
  const Eigen::VectorXd seq = solve_full(sys).xi;
  CHECK((mono - seq).norm() <= 1e-10 * mono.norm());

  const BlockTimeSolver solver(sys, true);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(g.unknowns()), 1, 2);
  const Eigen::VectorXd z = solver.solve_transpose(y);
  CHECK((Eigen::MatrixXd(sys.matrix()).transpose() * z - y).norm() <= 1e-10 * y.norm());
}

TEST_CASE("zero input gives the zero trajectory") {
  const NominalConfig cfg;
  const FullModel model(cfg, paper_grid());
  const SpaceTimeSystem sys = model.system(cfg.nominal);
  CHECK(sys.rhs().cwiseAbs().maxCoeff() <= 1e-12);
  const StateTrajectory traj = solve_full(sys);
  CHECK(traj.xi.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(evaluate(cfg.nominal, cfg, paper_grid()) <= 1e-12);
}

TEST_CASE("closed loop decays at nominal parameters") {
  const NominalConfig cfg;
  const FullModel model(cfg, paper_grid());
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int trial = 0; trial < 20; ++trial) {
    PhysicalParams mu = cfg.nominal;
    mu.xi1_0 = trial == 0 ? 0.01 : u(rng);
    mu.xi2_0 = trial == 0 ? 0.01 : u(rng);
    const StateTrajectory traj = model.trajectory(mu);
    const Grid& g = traj.grid;
    // Least-squares slope of log-norm against time.
    double st = 0, sy = 0, stt = 0, sty = 0;
    const int count = g.Nt + 1;
    for (int k = 0; k <= g.Nt; ++k) {
      const double t = g.t(k);
      const double y = std::log(traj.step_norm(k));
      st += t;
      sy += y;
      stt += t * t;
      sty += t * y;
    }
    const double slope = (count * sty - st * sy) / (count * stt - st * st);
    CHECK(slope < 0.0);
    CHECK(traj.step_norm(g.Nt) < traj.step_norm(0));
  }
}

TEST_CASE("pure transport with non-reflecting boundaries drains monotonically") {
  const Grid g = build_grid(250, 75, 5, 5);
  SchemeCoefficients c{};
  c.lambda_1 = 4.0;
  c.lambda_2 = 3.0;
  c.gamma = 0.0;
  c.delta = 0.0;
  c.w0 = 0.0;
  c.wL = 0.0;
  c.A_coef = 0.0;
  c.C_coef = 0.0;
  c.xi1_0 = 1.0;
  c.xi2_0 = 0.0;
  const StateTrajectory traj = solve_full(assemble(std::make_shared<const AffineTerms>(g), c));
  double previous = 1e300;
  for (int k = 0; k <= g.Nt; ++k) {
    double mass = 0.0;
    for (int i = 0; i < g.Nx; ++i) {
      mass += traj.xi1(k, i);
      CHECK(traj.xi2(k, i) == 0.0);
    }
    CHECK(mass < previous);
    previous = mass;
  }
  // The inflow boundary is clamped at zero and the profile rises towards the
  // undisturbed region downstream of the front.
  for (int k = 1; k <= g.Nt; ++k) {
    CHECK(traj.xi1(k, 0) == 0.0);
    for (int i = 1; i < g.Nx; ++i) CHECK(traj.xi1(k, i) >= traj.xi1(k, i - 1));
  }
}

TEST_CASE("discrete output") {
  const Grid g = build_grid(10, 1, 5, 1);
  StateTrajectory traj{g, Eigen::VectorXd::Zero(8)};
  CHECK(discrete_output(traj) == 0.0);
  traj.xi[5] = 3.0;
  CHECK(discrete_output(traj) == 3.0);
  traj.xi << 1, -2, 3, 0.5, 0.25, -1, 2, 7;
  CHECK(std::abs(discrete_output(traj) - std::sqrt(traj.xi.squaredNorm())) <= 1e-14);
}

TEST_CASE("evaluation is deterministic and positive under forcing") {
  const NominalConfig cfg;
  PhysicalParams mu = cfg.nominal;
  mu.xi1_0 = 0.01;
  mu.xi2_0 = 0.01;
  const double a = evaluate(mu, cfg, paper_grid());
  const double b = evaluate(mu, cfg, paper_grid());
  CHECK(a > 0.0);
  CHECK(a == b);
}

TEST_CASE("grid refinement converges at the rate expected for discontinuous data") {
  const NominalConfig cfg;
  PhysicalParams mu = cfg.nominal;
  mu.C = 1.05e-3;
  mu.xi1_0 = 0.01;
  // Scale by sqrt(dx dt) so outputs on different grids approximate the same integral.
  auto scaled = [&](double h) { return evaluate(mu, cfg, build_grid(250, 75, h, h)) * std::sqrt(h * h); };
  const double a = scaled(2.5);
  const double b = scaled(1.25);
  const double c = scaled(0.625);
  // The initial state does not match the boundary data, so the solution carries a
  // jump; first-order upwind then converges in L2 at order 1/2.
  const double ratio = std::abs(c - b) / std::abs(b - a);
  CHECK(ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.03));
}

TEST_CASE("appending time steps never decreases the output") {
  const NominalConfig cfg;
  PhysicalParams mu = cfg.nominal;
  mu.C = 0.95e-3;
  mu.xi2_0 = -0.005;
  double previous = 0.0;
  for (double T : {5.0, 25.0, 50.0, 75.0, 100.0}) {
    const double y = evaluate(mu, cfg, build_grid(250, T, 5, 5));
    CHECK(y >= previous);
    previous = y;
  }
}

TEST_CASE("singular step matrix is reported") {
  const Grid g = build_grid(10, 1, 5, 1);
  SchemeCoefficients c{};
  c.lambda_2 = 0.0;
  c.delta = 0.0;
  c.gamma = 1.0;
  c.w0 = 0.5;
  c.lambda_1 = 1.0;
  CHECK_THROWS_AS((void)solve_full(assemble(std::make_shared<const AffineTerms>(g), c)), NumericalError);
}

TEST_CASE("trajectory CSV") {
  const NominalConfig cfg;
  PhysicalParams mu = cfg.nominal;
  mu.xi1_0 = 0.01;
  const Grid g = build_grid(10, 2, 5, 1);
  const StateTrajectory traj = FullModel(cfg, g).trajectory(mu);
  std::ostringstream os;
  write_trajectory_csv(os, traj, 1.25, 9.81);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,x,xi1,xi2,h,v");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == (g.Nt + 1) * g.Nx);
  CHECK(os.str().find("0,0,0.01,0,") != std::string::npos);
}
