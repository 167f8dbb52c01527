#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "canalsense/errors.hpp"
#include "canalsense/rb.hpp"

using namespace canalsense;

namespace {

const FullModel& paper_model() {
  static const FullModel model(NominalConfig{}, build_grid(250, 75, 5, 5));
  return model;
}

const SnapshotSet& paper_snapshots() {
  static const SnapshotSet set = collect_snapshots(paper_model(), table1_distributions(), 100, 2024);
  return set;
}

const PodModes& paper_modes() {
  static const PodModes modes = compute_pod(paper_snapshots());
  return modes;
}

std::vector<PhysicalParams> draws(std::size_t n, std::uint64_t seed) {
  const SampleMatrix M = sample_matrix(table1_distributions(), n, seed, SampleStream::certification);
  std::vector<PhysicalParams> out;
  for (Eigen::Index j = 0; j < M.rows(); ++j) out.push_back(params_from_row({M.row(j).data(), kNumParams}));
  return out;
}

double orthonormality_defect(const Eigen::MatrixXd& Z) {
  return (Z.transpose() * Z - Eigen::MatrixXd::Identity(Z.cols(), Z.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("a single snapshot is the full solve at its parameter") {
  const auto set = collect_snapshots(paper_model(), table1_distributions(), 1, 17);
  REQUIRE(set.count() == 1);
  const Eigen::VectorXd direct = paper_model().trajectory(set.params[0]).xi;
  CHECK(set.matrix.col(0) == direct);
  CHECK(set.matrix.col(0).norm() == paper_model()(set.params[0]));
}

TEST_CASE("snapshot sets are reproducible and schedule independent") {
  const auto a = collect_snapshots(paper_model(), table1_distributions(), 12, 5, Execution::serial_reference());
  const auto b = collect_snapshots(paper_model(), table1_distributions(), 12, 5, Execution::with_threads(3));
  CHECK(a.params == b.params);
  CHECK(a.matrix == b.matrix);
  CHECK(paper_snapshots().count() == 100);
  CHECK(paper_snapshots().matrix.rows() == 1600);
}

TEST_CASE("rank-one snapshot set") {
  const FullModel& model = paper_model();
  PhysicalParams mu = model.config().nominal;
  mu.xi1_0 = 0.01;
  PhysicalParams twice = mu;
  twice.xi1_0 = 0.02;  // the state is linear in the initial data
  const auto set = collect_snapshots(model, std::vector<PhysicalParams>{mu, twice});
  const PodModes modes = compute_pod(set);
  CHECK(modes.rank == 1);
  const ReducedBasis rb(model, modes, 1);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const Eigen::VectorXd s = set.matrix.col(j);
    CHECK((s - rb.Z() * (rb.Z().transpose() * s)).norm() <= 1e-10 * s.norm());
  }
  try {
    (void)ReducedBasis(model, modes, 2);
    FAIL("expected a rank error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("rank 1") != std::string::npos);
  }
}

TEST_CASE("basis at full rank reproduces every snapshot") {
  const PodModes& modes = paper_modes();
  const ReducedBasis rb(paper_model(), modes, modes.rank);
  const Eigen::MatrixXd& S = paper_snapshots().matrix;
  for (Eigen::Index j = 0; j < S.cols(); ++j) {
    const Eigen::VectorXd s = S.col(j);
    CHECK((s - rb.Z() * (rb.Z().transpose() * s)).norm() <= 1e-8 * s.norm());
  }
}

TEST_CASE("truncation energy equals the discarded singular values") {
  const Eigen::MatrixXd& S = paper_snapshots().matrix;
  // Independent SVD algorithm as the oracle for the spectrum.
  const Eigen::JacobiSVD<Eigen::MatrixXd> oracle(S);
  const Eigen::VectorXd& sv = oracle.singularValues();
  CHECK((paper_modes().sigma - sv).cwiseAbs().maxCoeff() <= 1e-10 * sv[0]);
  for (std::size_t m : {1u, 4u, 8u, 14u}) {
    const ReducedBasis rb(paper_model(), paper_modes(), m);
    const double energy = (S - rb.Z() * (rb.Z().transpose() * S)).squaredNorm();
    const double discarded = sv.tail(sv.size() - static_cast<Eigen::Index>(m)).squaredNorm();
    CAPTURE(m);
    CHECK(energy == doctest::Approx(discarded).epsilon(1e-8));
  }
}

TEST_CASE("basis columns are orthonormal") {
  const ReducedBasis rb(paper_model(), paper_modes(), 20);
  CHECK(orthonormality_defect(rb.Z()) <= 1e-10);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x(20);
    for (auto& v : x) v = nd(gen);
    CHECK((rb.Z() * x).norm() == doctest::Approx(x.norm()).epsilon(1e-10));
  }
}

TEST_CASE("projected terms reproduce the projected full operator") {
  const ReducedBasis rb(paper_model(), paper_modes(), 10);
  for (const PhysicalParams& mu : draws(5, 8)) {
    const SpaceTimeSystem sys = paper_model().system(mu);
    const Eigen::MatrixXd direct = rb.Z().transpose() * (sys.matrix() * rb.Z());
    const auto theta = operator_weights(sys.coefficients);
    Eigen::MatrixXd affine = Eigen::MatrixXd::Zero(10, 10);
    for (std::size_t q = 0; q < kOperatorTerms; ++q) affine += theta[q] * rb.reduced_operators()[q];
    CHECK((affine - direct).cwiseAbs().maxCoeff() <= 1e-10 * direct.cwiseAbs().maxCoeff());
    const Eigen::VectorXd b_direct = rb.Z().transpose() * sys.rhs();
    const auto w = rhs_weights(sys.coefficients);
    Eigen::VectorXd b_affine = Eigen::VectorXd::Zero(10);
    for (std::size_t q = 0; q < kRhsTerms; ++q) b_affine += w[q] * rb.reduced_rhs()[q];
    CHECK((b_affine - b_direct).norm() <= 1e-12 * std::max(1.0, b_direct.norm()));
  }
}

TEST_CASE("nested truncation equals a basis built at that size") {
  const ReducedBasis big(paper_model(), paper_modes(), 16);
  const ReducedBasis direct(paper_model(), paper_modes(), 6);
  const ReducedBasis cut = big.truncated(6);
  CHECK(cut.Z() == direct.Z());
  for (std::size_t q = 0; q < kOperatorTerms; ++q) {
    CHECK((cut.reduced_operators()[q] - direct.reduced_operators()[q]).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS((void)big.truncated(17), NumericalError);
  CHECK_THROWS_AS((void)big.truncated(0), NumericalError);
}

TEST_CASE("reduced solve reproduces snapshot parameters at full rank") {
  const ReducedBasis rb(paper_model(), paper_modes(), paper_modes().rank);
  for (std::size_t j = 0; j < 10; ++j) {
    const PhysicalParams& mu = paper_snapshots().params[j];
    const Eigen::VectorXd xi = paper_snapshots().matrix.col(static_cast<Eigen::Index>(j));
    const Eigen::VectorXd xt = solve_reduced(rb, mu);
    CHECK((rb.Z() * xt - xi).norm() <= 1e-6 * xi.norm());
    CHECK(xt.norm() == doctest::Approx((rb.Z() * xt).norm()).epsilon(1e-10));
    const ErrorBound eb = error_bound(rb, mu, xt);
    CHECK(eb.rho <= 1e-8 * paper_model().system(mu).rhs().norm());
  }
}

TEST_CASE("zero data gives a zero reduced state and a zero bound") {
  const ReducedBasis rb(paper_model(), paper_modes(), 8);
  // At the nominal point the boundary constants vanish up to rounding.
  const PhysicalParams mu = paper_model().config().nominal;
  const Eigen::VectorXd xt = solve_reduced(rb, mu);
  CHECK(xt.norm() <= 1e-12);
  const ErrorBound eb = error_bound(rb, mu, xt);
  CHECK(eb.rho <= 1e-12);
  CHECK(eb.bound <= 1e-10);
  CHECK(eb.alpha > 0.0);
  const ErrorBound exact_zero = error_bound(rb, mu, Eigen::VectorXd::Zero(8));
  CHECK(exact_zero.rho == paper_model().system(mu).rhs().norm());
}

TEST_CASE("smallest singular value matches a dense decomposition") {
  const FullModel small(NominalConfig{}, build_grid(50, 20, 5, 5));
  for (const PhysicalParams& mu : draws(4, 21)) {
    const SpaceTimeSystem sys = small.system(mu);
    const Eigen::MatrixXd dense = sys.matrix();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
    const double exact = svd.singularValues().minCoeff();
    CHECK(smallest_singular_value(sys) == doctest::Approx(exact).epsilon(1e-6));
  }
  StabilityOptions tight;
  tight.max_iterations = 2;
  tight.tolerance = 1e-300;
  CHECK_THROWS_AS((void)smallest_singular_value(small.system(PhysicalParams{}), tight), NumericalError);
}

TEST_CASE("error bound certifies state and output on random parameters") {
  const ReducedBasis rb(paper_model(), paper_modes(), 8);
  int violations = 0;
  for (const PhysicalParams& mu : draws(100, 99)) {
    const Eigen::VectorXd xi = paper_model().trajectory(mu).xi;
    const Eigen::VectorXd xt = solve_reduced(rb, mu);
    const ErrorBound eb = error_bound(rb, mu, xt);
    const double state_error = (xi - rb.Z() * xt).norm();
    const double output_error = std::abs(xi.norm() - xt.norm());
    if (state_error > eb.bound || output_error > eb.bound) ++violations;
    CHECK(std::isfinite(eb.bound / std::max(state_error, 1e-300)));
  }
  CHECK(violations == 0);
}

TEST_CASE("best approximation error decreases over nested bases") {
  // The Galerkin error itself need not decrease monotonically for this
  // non-symmetric operator; the orthogonal projection error must.
  const ReducedBasis rb(paper_model(), paper_modes(), 16);
  std::vector<Eigen::VectorXd> full;
  for (const PhysicalParams& mu : draws(50, 4)) full.push_back(paper_model().trajectory(mu).xi);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m <= 16; ++m) {
    const ReducedBasis r = rb.truncated(m);
    double mse = 0.0;
    for (const auto& xi : full) mse += (xi - r.Z() * (r.Z().transpose() * xi)).squaredNorm();
    mse /= static_cast<double>(full.size());
    CHECK(mse <= previous + 1e-12);
    previous = mse;
  }
}

TEST_CASE("basis persistence round trip") {
  const ReducedBasis rb(paper_model(), paper_modes(), 9);
  std::stringstream buffer;
  rb.save(buffer);
  const std::string bytes = buffer.str();
  CHECK(bytes.rfind("rb-basis v1 1600 9 7\n", 0) == 0);

  std::istringstream in(bytes);
  const ReducedBasis loaded = ReducedBasis::load(in, paper_model());
  CHECK(loaded.Z() == rb.Z());
  CHECK(orthonormality_defect(loaded.Z()) <= 1e-10);
  for (std::size_t q = 0; q < kOperatorTerms; ++q) CHECK(loaded.reduced_operators()[q] == rb.reduced_operators()[q]);
  CHECK(loaded.singular_values() == rb.singular_values());
  const PhysicalParams mu = draws(1, 3)[0];
  CHECK(solve_reduced(loaded, mu) == solve_reduced(rb, mu));

  std::ostringstream again;
  loaded.save(again);
  CHECK(again.str() == bytes);
}

TEST_CASE("loading refuses mismatched or damaged files") {
  const ReducedBasis rb(paper_model(), paper_modes(), 5);
  std::stringstream buffer;
  rb.save(buffer);
  const std::string bytes = buffer.str();

  const FullModel finer(NominalConfig{}, build_grid(250, 75, 5, 2.5));
  std::istringstream a(bytes);
  CHECK_THROWS_AS((void)ReducedBasis::load(a, finer), ValidationError);

  NominalConfig other_gain;
  other_gain.k_0 = 0.5;
  const FullModel other(other_gain, build_grid(250, 75, 5, 5));
  std::istringstream b(bytes);
  CHECK_THROWS_AS((void)ReducedBasis::load(b, other), ValidationError);

  std::istringstream c(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS((void)ReducedBasis::load(c, paper_model()), ValidationError);

  std::istringstream d("rb-basis v2 1600 5 7\n");
  CHECK_THROWS_AS((void)ReducedBasis::load(d, paper_model()), ValidationError);
}

TEST_CASE("basis-size rule") {
  // Published constants: -log(30000 * 0.2414 * log log 30000) / log 0.5070.
  const double raw = m_rule_raw(30000, 0.2414, 0.5070);
  const double oracle = -std::log(30000.0 * 0.2414 * std::log(std::log(30000.0))) / std::log(0.5070);
  CHECK(raw == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(raw == doctest::Approx(14.33).epsilon(5e-4));
  CHECK(m_rule(30000, 0.2414, 0.5070) == 15);
  std::size_t previous = 0;
  for (double n = 100; n < 1e7; n *= 1.7) {
    const std::size_t m = m_rule(n, 0.2414, 0.5070);
    CHECK(m >= previous);
    previous = m;
  }
  CHECK_THROWS_AS((void)m_rule_raw(30000, 0.2, 1.2), std::invalid_argument);
}

TEST_CASE("log-linear fit recovers geometric decay") {
  std::vector<std::size_t> ms;
  std::vector<double> var;
  for (std::size_t m = 3; m <= 14; ++m) {
    ms.push_back(m);
    var.push_back(0.25 * std::pow(0.4, static_cast<double>(m)));
  }
  const CalibrationModel fit = fit_calibration(ms, var);
  CHECK(fit.c == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(fit.q == doctest::Approx(0.4).epsilon(1e-10));

  std::vector<double> growing(var.rbegin(), var.rend());
  CHECK_THROWS_AS((void)fit_calibration(ms, growing), NumericalError);
}

TEST_CASE("calibration on a small validation sample") {
  const ReducedBasis rb(paper_model(), paper_modes(), 12);
  const std::vector<std::size_t> ms = {3, 4, 5, 6, 7, 8, 9, 10};
  const CalibrationModel cal = calibrate(paper_model(), rb, table1_distributions(), ms, 60, 31);
  CHECK(cal.var_delta.size() == ms.size());
  CHECK(cal.q > 0.0);
  CHECK(cal.q < 1.0);
  CHECK(cal.var_delta.back() < cal.var_delta.front());
  // Oracle for one entry: direct sample variance of reduced minus full output.
  const SampleMatrix M = sample_matrix(table1_distributions(), 60, 31, SampleStream::validation);
  const ReducedBasis r5 = rb.truncated(5);
  std::vector<double> d;
  for (Eigen::Index j = 0; j < M.rows(); ++j) {
    const PhysicalParams mu = params_from_row({M.row(j).data(), kNumParams});
    d.push_back(reduced_output(r5, mu) - paper_model()(mu));
  }
  double mean = 0.0;
  for (double v : d) mean += v / 60.0;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  CHECK(cal.var_delta[2] == doctest::Approx(ss / 59.0).epsilon(1e-10));
  CHECK_THROWS_AS((void)calibrate(paper_model(), rb, table1_distributions(), ms, 1, 31), ConfigError);
}
