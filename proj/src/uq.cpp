#include "canalsense/uq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "canalsense/errors.hpp"
#include "canalsense/io.hpp"

namespace canalsense {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, SampleStream stream, std::size_t column) {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ column);
}

// Open interval (0, 1); never returns the endpoints, so normal quantiles stay finite.
double open_unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53; }

struct Moments {
  double mean;
  double var;  // pooled, 1/(2n) normalization
};

Moments pooled(std::span<const double> Y1, std::span<const double> Y2) {
  const auto n = static_cast<double>(Y1.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < Y1.size(); ++j) sum += Y1[j] + Y2[j];
  const double mean = sum / (2.0 * n);
  double ss = 0.0;
  for (std::size_t j = 0; j < Y1.size(); ++j) {
    const double a = Y1[j] - mean;
    const double b = Y2[j] - mean;
    ss += a * a + b * b;
  }
  return {mean, ss / (2.0 * n)};
}

void check_pair(std::span<const double> Y1, std::span<const double> Y2u) {
  if (Y1.size() != Y2u.size()) throw std::invalid_argument("output samples differ in length");
  if (Y1.size() < 2) throw std::invalid_argument("need at least two outputs");
  const auto [lo1, hi1] = std::minmax_element(Y1.begin(), Y1.end());
  const auto [lo2, hi2] = std::minmax_element(Y2u.begin(), Y2u.end());
  if (*lo1 == *hi1 && *lo2 == *hi2 && *lo1 == *lo2) {
    throw NumericalError("degenerate Sobol estimate: output is constant over the sample");
  }
}

// Rethrows the active exception with `where` prepended, keeping its category.
[[noreturn]] void rethrow_with_context(const std::string& where) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

}  // namespace

void Distribution::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError("distribution parameters must be finite");
  if (kind == Kind::normal && !(b > 0.0)) throw ConfigError("normal distribution needs sd > 0");
  if (kind == Kind::uniform && !(a < b)) throw ConfigError("uniform distribution needs lo < hi");
}

double Distribution::quantile(double u) const {
  return kind == Kind::normal ? a + b * normal_quantile(u) : a + (b - a) * u;
}

double Distribution::mean() const { return kind == Kind::normal ? a : 0.5 * (a + b); }

std::vector<Distribution> table1_distributions() {
  return {
      Distribution::normal(4.0, 0.03),        Distribution::normal(80.0, 1.03),
      Distribution::normal(2e-4, 2.5e-6),     Distribution::uniform(9e-4, 1.1e-3),
      Distribution::normal(10.0, 0.13),       Distribution::uniform(-0.01, 0.01),
      Distribution::uniform(-0.01, 0.01),     Distribution::normal(0.65, 0.0066),
      Distribution::normal(0.65, 0.0066),
  };
}

SampleMatrix sample_matrix(const std::vector<Distribution>& specs, std::size_t n, std::uint64_t seed,
                           SampleStream stream) {
  SampleMatrix M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(specs.size()));
  for (std::size_t col = 0; col < specs.size(); ++col) {
    specs[col].validate();
    std::mt19937_64 gen(stream_seed(seed, stream, col));
    for (std::size_t j = 0; j < n; ++j) {
      M(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(col)) = specs[col].quantile(open_unit(gen()));
    }
  }
  return M;
}

PickFreezeDesign sample_parameters(const std::vector<Distribution>& specs, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("pick-freeze design needs n >= 2");
  return {sample_matrix(specs, n, seed, SampleStream::design_first),
          sample_matrix(specs, n, seed, SampleStream::design_second)};
}

PhysicalParams params_from_row(std::span<const double> row) {
  if (row.size() != kNumParams) throw std::invalid_argument("parameter row must have 9 entries");
  std::array<double, kNumParams> values{};
  std::copy(row.begin(), row.end(), values.begin());
  return PhysicalParams::from_array(values);
}

IndexSet complement(const IndexSet& u, std::size_t p) {
  IndexSet out;
  for (std::size_t i = 0; i < p; ++i) {
    if (std::find(u.begin(), u.end(), i) == u.end()) out.push_back(i);
  }
  return out;
}

SampleMatrix pick_freeze_mix(const SampleMatrix& M1, const SampleMatrix& M2, const IndexSet& u) {
  if (u.empty()) throw std::invalid_argument("pick-freeze set must be nonempty");
  if (M1.rows() != M2.rows() || M1.cols() != M2.cols()) throw std::invalid_argument("sample shapes differ");
  SampleMatrix out = M2;
  for (std::size_t i : u) {
    if (i >= static_cast<std::size_t>(M1.cols())) throw std::invalid_argument("index outside parameter range");
    out.col(static_cast<Eigen::Index>(i)) = M1.col(static_cast<Eigen::Index>(i));
  }
  return out;
}

double estimate_closed(std::span<const double> Y1, std::span<const double> Y2u) {
  check_pair(Y1, Y2u);
  // Same quantity as (mean of Y1 Y2u - m^2) / (mean of (Y1^2 + Y2u^2)/2 - m^2),
  // written around the pooled mean m to avoid cancellation.
  const Moments mo = pooled(Y1, Y2u);
  double cross = 0.0;
  for (std::size_t j = 0; j < Y1.size(); ++j) cross += (Y1[j] - mo.mean) * (Y2u[j] - mo.mean);
  return cross / static_cast<double>(Y1.size()) / mo.var;
}

double asymptotic_variance(std::span<const double> Y1, std::span<const double> Y2u, double s_hat) {
  check_pair(Y1, Y2u);
  const Moments mo = pooled(Y1, Y2u);
  const std::size_t n = Y1.size();
  std::vector<double> Z(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = Y1[j] - mo.mean;
    const double b = Y2u[j] - mo.mean;
    Z[j] = a * b - 0.5 * s_hat * (a * a + b * b);
  }
  const double zbar = std::accumulate(Z.begin(), Z.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double z : Z) ss += (z - zbar) * (z - zbar);
  return std::sqrt(ss / static_cast<double>(n)) / mo.var;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal quantile needs 0 < p < 1");
  // Rational approximation (Acklam), then one Halley step against erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

Interval confidence_interval(double s_hat, double v_hat, std::size_t n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double z = normal_quantile(1.0 - 0.5 * (1.0 - level));
  const double half = z * v_hat / std::sqrt(static_cast<double>(n));
  return {s_hat - half, s_hat + half};
}

SobolEstimate first_order_estimate(std::size_t i, std::span<const double> Y1, std::span<const double> Y_first,
                                   double level) {
  SobolEstimate est;
  est.u = {i};
  est.s_closed = estimate_closed(Y1, Y_first);
  est.value = est.s_closed;
  est.v_hat = asymptotic_variance(Y1, Y_first, est.s_closed);
  est.n = Y1.size();
  est.level = level;
  const Interval ci = confidence_interval(est.value, est.v_hat, est.n, level);
  est.ci_lo = ci.lo;
  est.ci_hi = ci.hi;
  return est;
}

SobolEstimate total_estimate(std::size_t i, std::size_t p, std::span<const double> Y1,
                             std::span<const double> Y_total, double level) {
  SobolEstimate est;
  est.u = complement({i}, p);
  est.s_closed = estimate_closed(Y1, Y_total);
  est.value = 1.0 - est.s_closed;
  // 1 - S has the same asymptotic spread as S.
  est.v_hat = asymptotic_variance(Y1, Y_total, est.s_closed);
  est.n = Y1.size();
  est.level = level;
  const Interval ci = confidence_interval(est.value, est.v_hat, est.n, level);
  est.ci_lo = ci.lo;
  est.ci_hi = ci.hi;
  return est;
}

SensitivityResult run_sensitivity(const Evaluator& f, const std::vector<Distribution>& specs, std::size_t n,
                                  std::uint64_t seed, double level, const Execution& exec) {
  const std::size_t p = specs.size();
  const PickFreezeDesign design = sample_parameters(specs, n, seed);
  const std::size_t blocks = 1 + 2 * p;

  // Block 0 is M1; block 1 + 2i mixes {i}, block 2 + 2i mixes {i}^c.
  std::vector<double> Y(blocks * n);
  for_each_index(
      blocks * n,
      [&](std::size_t t) {
        const std::size_t block = t / n;
        const auto j = static_cast<Eigen::Index>(t % n);
        std::vector<double> row(p);
        for (std::size_t col = 0; col < p; ++col) {
          bool from_first = true;
          if (block > 0) {
            const std::size_t i = (block - 1) / 2;
            const bool single = (block - 1) % 2 == 0;
            from_first = single ? col == i : col != i;
          }
          const auto c = static_cast<Eigen::Index>(col);
          row[col] = from_first ? design.M1(j, c) : design.M2(j, c);
        }
        try {
          Y[t] = f(row);
        } catch (...) {
          std::ostringstream where;
          where << "sample " << j << " of design block " << block;
          rethrow_with_context(where.str());
        }
      },
      exec);

  SensitivityResult result;
  result.n = n;
  result.level = level;
  result.evaluations = Y.size();
  const std::span<const double> all(Y);
  const auto Y1 = all.subspan(0, n);
  for (std::size_t i = 0; i < p; ++i) {
    result.first.push_back(first_order_estimate(i, Y1, all.subspan((1 + 2 * i) * n, n), level));
    result.total.push_back(total_estimate(i, p, Y1, all.subspan((2 + 2 * i) * n, n), level));
  }
  return result;
}

void write_index_csv(std::ostream& os, const SensitivityResult& result, const std::vector<std::string>& names) {
  os << "param,first,first_lo,first_hi,total,total_lo,total_hi,vhat_first,vhat_total,n,level\n";
  for (std::size_t i = 0; i < result.first.size(); ++i) {
    const SobolEstimate& f = result.first[i];
    const SobolEstimate& t = result.total[i];
    os << names.at(i) << ',' << fmt_double(f.value) << ',' << fmt_double(f.ci_lo) << ',' << fmt_double(f.ci_hi)
       << ',' << fmt_double(t.value) << ',' << fmt_double(t.ci_lo) << ',' << fmt_double(t.ci_hi) << ','
       << fmt_double(f.v_hat) << ',' << fmt_double(t.v_hat) << ',' << result.n << ',' << fmt_double(result.level)
       << '\n';
  }
}

void write_index_plot_data(std::ostream& os, const std::vector<SobolEstimate>& estimates,
                           const std::vector<std::string>& names) {
  os << "# index name estimate lo hi\n";
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    os << i + 1 << ' ' << names.at(i) << ' ' << fmt_double(estimates[i].value) << ' '
       << fmt_double(estimates[i].ci_lo) << ' ' << fmt_double(estimates[i].ci_hi) << '\n';
  }
}

}  // namespace canalsense
