#include "canalsense/rb.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "canalsense/errors.hpp"
#include "canalsense/io.hpp"

namespace canalsense {

namespace {

static_assert(std::endian::native == std::endian::little, "basis files are written in host order");

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

void write_reals(std::ostream& os, const double* data, std::size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("basis file truncated");
  return v;
}

void read_reals(std::istream& is, double* data, std::size_t count) {
  if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)))) {
    throw ValidationError("basis file truncated");
  }
}

std::size_t numerical_rank(const Eigen::VectorXd& sigma, std::size_t rows, std::size_t cols) {
  if (sigma.size() == 0 || sigma[0] == 0.0) return 0;
  const double tol =
      sigma[0] * static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon();
  std::size_t rank = 0;
  while (rank < static_cast<std::size_t>(sigma.size()) && sigma[static_cast<Eigen::Index>(rank)] > tol) ++rank;
  return rank;
}

}  // namespace

SnapshotSet collect_snapshots(const FullModel& model, const std::vector<PhysicalParams>& params,
                              const Execution& exec) {
  SnapshotSet set;
  set.grid = model.grid();
  set.params = params;
  set.matrix.resize(static_cast<Eigen::Index>(model.grid().unknowns()), static_cast<Eigen::Index>(params.size()));
  for_each_index(
      params.size(),
      [&](std::size_t j) {
        try {
          set.matrix.col(static_cast<Eigen::Index>(j)) = model.trajectory(params[j]).xi;
        } catch (const DomainError& e) {
          throw DomainError("snapshot " + std::to_string(j) + ": " + e.what());
        } catch (const NumericalError& e) {
          throw NumericalError("snapshot " + std::to_string(j) + ": " + e.what());
        }
      },
      exec);
  return set;
}

SnapshotSet collect_snapshots(const FullModel& model, const std::vector<Distribution>& specs, std::size_t count,
                              std::uint64_t seed, const Execution& exec) {
  if (count < 1) throw ConfigError("snapshot count must be at least 1");
  const SampleMatrix draws = sample_matrix(specs, count, seed, SampleStream::snapshots);
  std::vector<PhysicalParams> params;
  params.reserve(count);
  for (Eigen::Index j = 0; j < draws.rows(); ++j) {
    params.push_back(params_from_row({draws.row(j).data(), static_cast<std::size_t>(draws.cols())}));
  }
  return collect_snapshots(model, params, exec);
}

PodModes compute_pod(const SnapshotSet& snapshots) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(snapshots.matrix, Eigen::ComputeThinU);
  PodModes modes;
  modes.sigma = svd.singularValues();
  modes.rank = numerical_rank(modes.sigma, static_cast<std::size_t>(snapshots.matrix.rows()),
                              static_cast<std::size_t>(snapshots.matrix.cols()));
  modes.U = svd.matrixU().leftCols(static_cast<Eigen::Index>(modes.rank));
  return modes;
}

std::vector<double> model_fingerprint(const FullModel& model) {
  const Grid& g = model.grid();
  const NominalConfig& c = model.config();
  std::vector<double> fp = {static_cast<double>(g.Nx), static_cast<double>(g.Nt), g.dx, g.dt, g.L, g.T_star,
                            c.k_0, c.k_L, c.Q_star, c.g,
                            c.linearization == BoundaryLinearization::taylor ? 0.0 : 1.0};
  for (double v : c.nominal.to_array()) fp.push_back(v);
  return fp;
}

ReducedBasis::ReducedBasis(const FullModel& model, const PodModes& modes, std::size_t m)
    : cfg_(model.config()), terms_(model.terms()), sigma_(modes.sigma), fingerprint_(model_fingerprint(model)) {
  if (m == 0) throw NumericalError("basis size must be at least 1");
  if (m > modes.rank) {
    std::ostringstream os;
    os << "basis size " << m << " exceeds the numerical rank " << modes.rank << " of the snapshot matrix";
    throw NumericalError(os.str());
  }
  Z_ = modes.U.leftCols(static_cast<Eigen::Index>(m));
  for (const SparseMatrix& A : terms_->operators()) ops_.push_back(Z_.transpose() * (A * Z_));
  for (const Eigen::VectorXd& b : terms_->rhs()) rhs_.push_back(Z_.transpose() * b);
}

ReducedBasis ReducedBasis::truncated(std::size_t m) const {
  if (m == 0 || m > size()) throw NumericalError("truncation size outside [1, " + std::to_string(size()) + "]");
  const auto k = static_cast<Eigen::Index>(m);
  ReducedBasis out = *this;
  out.Z_ = Z_.leftCols(k);
  for (auto& A : out.ops_) A = A.topLeftCorner(k, k).eval();
  for (auto& b : out.rhs_) b = b.head(k).eval();
  return out;
}

void ReducedBasis::save(std::ostream& os) const {
  os << "rb-basis v1 " << Z_.rows() << ' ' << Z_.cols() << ' ' << ops_.size() << '\n';
  write_u64(os, fingerprint_.size());
  write_reals(os, fingerprint_.data(), fingerprint_.size());
  write_u64(os, rhs_.size());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Zr = Z_;
  write_reals(os, Zr.data(), static_cast<std::size_t>(Zr.size()));
  for (const auto& A : ops_) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Ar = A;
    write_reals(os, Ar.data(), static_cast<std::size_t>(Ar.size()));
  }
  for (const auto& b : rhs_) write_reals(os, b.data(), static_cast<std::size_t>(b.size()));
  write_u64(os, static_cast<std::uint64_t>(sigma_.size()));
  write_reals(os, sigma_.data(), static_cast<std::size_t>(sigma_.size()));
}

ReducedBasis ReducedBasis::load(std::istream& is, const FullModel& model) {
  std::string header;
  if (!std::getline(is, header)) throw ValidationError("basis file is empty");
  std::istringstream hs(header);
  std::string magic, version;
  std::size_t N = 0, m = 0, Q = 0;
  if (!(hs >> magic >> version >> N >> m >> Q) || magic != "rb-basis" || version != "v1") {
    throw ValidationError("not an rb-basis v1 file");
  }
  if (N != model.grid().unknowns() || Q != kOperatorTerms || m == 0 || m > N) {
    throw ValidationError("basis dimensions do not match the current grid");
  }

  ReducedBasis rb;
  rb.cfg_ = model.config();
  rb.terms_ = model.terms();
  const std::uint64_t F = read_u64(is);
  if (F > 1024) throw ValidationError("basis fingerprint too long");
  rb.fingerprint_.resize(F);
  read_reals(is, rb.fingerprint_.data(), F);
  if (rb.fingerprint_ != model_fingerprint(model)) {
    throw ValidationError("basis was built for a different grid or configuration");
  }
  const std::uint64_t R = read_u64(is);
  if (R != kRhsTerms) throw ValidationError("basis rhs term count mismatch");

  const auto n = static_cast<Eigen::Index>(N);
  const auto k = static_cast<Eigen::Index>(m);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Zr(n, k);
  read_reals(is, Zr.data(), N * m);
  rb.Z_ = Zr;
  for (std::size_t q = 0; q < Q; ++q) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Ar(k, k);
    read_reals(is, Ar.data(), m * m);
    rb.ops_.emplace_back(Ar);
  }
  for (std::size_t q = 0; q < R; ++q) {
    Eigen::VectorXd b(k);
    read_reals(is, b.data(), m);
    rb.rhs_.push_back(std::move(b));
  }
  const std::uint64_t S = read_u64(is);
  if (S > N) throw ValidationError("basis singular value count out of range");
  rb.sigma_.resize(static_cast<Eigen::Index>(S));
  read_reals(is, rb.sigma_.data(), S);
  return rb;
}

ReducedBasis pod(const FullModel& model, const SnapshotSet& snapshots, std::size_t m) {
  return ReducedBasis(model, compute_pod(snapshots), m);
}

Eigen::VectorXd solve_reduced(const ReducedBasis& rb, const PhysicalParams& mu) {
  const SchemeCoefficients c = scheme_coefficients(mu, rb.config());
  const auto theta = operator_weights(c);
  const auto weights = rhs_weights(c);
  Eigen::MatrixXd A = theta[0] * rb.reduced_operators()[0];
  for (std::size_t q = 1; q < kOperatorTerms; ++q) A += theta[q] * rb.reduced_operators()[q];
  Eigen::VectorXd b = weights[0] * rb.reduced_rhs()[0];
  for (std::size_t q = 1; q < kRhsTerms; ++q) b += weights[q] * rb.reduced_rhs()[q];

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (!(lu.rcond() > 1e-14)) throw NumericalError("reduced matrix is singular to working precision");
  Eigen::VectorXd x = lu.solve(b);
  if (!x.allFinite()) throw NumericalError("reduced solve produced non-finite values");
  return x;
}

double reduced_output(const ReducedBasis& rb, const PhysicalParams& mu) { return solve_reduced(rb, mu).norm(); }

double smallest_singular_value(const SpaceTimeSystem& sys, const StabilityOptions& opts, int* iterations) {
  const BlockTimeSolver solver(sys, true);
  const auto n = static_cast<Eigen::Index>(sys.grid().unknowns());
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n).normalized();
  double previous = 0.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    // y = (A^T A)^{-1} x; the Rayleigh quotient x.y converges to 1 / sigma_min^2.
    const Eigen::VectorXd y = solver.solve(solver.solve_transpose(x));
    const double estimate = x.dot(y);
    if (!(estimate > 0.0) || !std::isfinite(estimate)) throw NumericalError("inverse iteration broke down");
    x = y / y.norm();
    if (it > 1 && std::abs(estimate - previous) <= opts.tolerance * estimate) {
      if (iterations) *iterations = it;
      return 1.0 / std::sqrt(estimate);
    }
    previous = estimate;
  }
  throw NumericalError("smallest singular value did not converge in " + std::to_string(opts.max_iterations) +
                       " iterations");
}

ErrorBound error_bound(const ReducedBasis& rb, const PhysicalParams& mu, const Eigen::VectorXd& xi_tilde,
                       const StabilityOptions& opts) {
  const SpaceTimeSystem sys = assemble(rb.terms(), scheme_coefficients(mu, rb.config()));
  ErrorBound out;
  out.rho = (sys.apply(rb.Z() * xi_tilde) - sys.rhs()).norm();
  out.alpha = smallest_singular_value(sys, opts, &out.iterations);
  out.bound = out.rho / out.alpha;
  return out;
}

double m_rule_raw(double n, double c, double q) {
  if (!(n > std::exp(1.0))) throw std::invalid_argument("basis-size rule needs n > e");
  if (!(c > 0.0) || !(q > 0.0 && q < 1.0)) throw std::invalid_argument("basis-size rule needs c > 0, 0 < q < 1");
  return -std::log(n * c * std::log(std::log(n))) / std::log(q);
}

std::size_t m_rule(double n, double c, double q) {
  const double raw = std::ceil(m_rule_raw(n, c, q));
  return raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
}

CalibrationModel fit_calibration(const std::vector<std::size_t>& m_values, const std::vector<double>& var_delta) {
  if (m_values.size() != var_delta.size() || m_values.size() < 2) {
    throw std::invalid_argument("calibration fit needs at least two (m, variance) pairs");
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(m_values.size()), 2);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double v = var_delta[static_cast<std::size_t>(r)];
    if (!(v > 0.0)) throw NumericalError("calibration: nonpositive variance at m = " +
                                         std::to_string(m_values[static_cast<std::size_t>(r)]));
    X(r, 0) = 1.0;
    X(r, 1) = static_cast<double>(m_values[static_cast<std::size_t>(r)]);
    y[r] = std::log(v);
  }
  const Eigen::Vector2d beta = X.colPivHouseholderQr().solve(y);
  CalibrationModel model;
  model.m_values = m_values;
  model.var_delta = var_delta;
  model.c = std::exp(beta[0]);
  model.q = std::exp(beta[1]);
  if (!(model.q < 1.0)) {
    std::ostringstream os;
    os << "calibration failed: fitted q = " << fmt_double(model.q) << " shows no decay; table m:var_delta";
    for (std::size_t r = 0; r < m_values.size(); ++r) os << ' ' << m_values[r] << ':' << fmt_double(var_delta[r]);
    throw NumericalError(os.str());
  }
  return model;
}

CalibrationModel calibrate(const FullModel& model, const ReducedBasis& rb, const std::vector<Distribution>& specs,
                           const std::vector<std::size_t>& m_values, std::size_t validation_count,
                           std::uint64_t seed, const Execution& exec) {
  if (validation_count < 2) throw ConfigError("calibration needs a validation sample of at least 2");
  const SampleMatrix draws = sample_matrix(specs, validation_count, seed, SampleStream::validation);
  std::vector<PhysicalParams> params;
  for (Eigen::Index j = 0; j < draws.rows(); ++j) {
    params.push_back(params_from_row({draws.row(j).data(), static_cast<std::size_t>(draws.cols())}));
  }
  std::vector<double> full(validation_count);
  for_each_index(validation_count, [&](std::size_t j) { full[j] = model(params[j]); }, exec);

  std::vector<double> variances;
  for (std::size_t m : m_values) {
    const ReducedBasis nested = rb.truncated(m);
    std::vector<double> delta(validation_count);
    for_each_index(
        validation_count, [&](std::size_t j) { delta[j] = reduced_output(nested, params[j]) - full[j]; }, exec);
    double mean = 0.0;
    for (double d : delta) mean += d;
    mean /= static_cast<double>(validation_count);
    double ss = 0.0;
    for (double d : delta) ss += (d - mean) * (d - mean);
    variances.push_back(ss / static_cast<double>(validation_count - 1));
  }
  CalibrationModel fitted = fit_calibration(m_values, variances);
  fitted.validation_count = validation_count;
  return fitted;
}

}  // namespace canalsense
