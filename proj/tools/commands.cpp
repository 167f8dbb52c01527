#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "canalsense/channel.hpp"
#include "canalsense/errors.hpp"
#include "canalsense/io.hpp"
#include "canalsense/parallel.hpp"
#include "canalsense/pde.hpp"
#include "canalsense/rb.hpp"
#include "canalsense/uq.hpp"

namespace canalsense::cli {

namespace fs = std::filesystem;

namespace {

Execution execution(const RunConfig& cfg) { return Execution::with_threads(cfg.threads); }

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = output_directory(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream echo(dir / "config_resolved.txt", std::ios::binary);
  echo_config(echo, cfg);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << content;
}

std::vector<std::string> parameter_names() {
  std::vector<std::string> out;
  for (auto name : param_names()) out.emplace_back(name);
  return out;
}

struct Basis {
  std::optional<ReducedBasis> rb;
  std::size_t rank = 0;  // largest usable size
};

// A basis from `basis = PATH`, or built from the configured snapshots with
// every mode up to the numerical rank.
Basis obtain_basis(const RunConfig& cfg, const FullModel& model, std::ostream& out) {
  Basis b;
  if (!cfg.basis_path.empty()) {
    std::ifstream in(cfg.basis_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open basis file " + cfg.basis_path);
    b.rb = ReducedBasis::load(in, model);
    b.rank = b.rb->size();
    out << "loaded basis " << cfg.basis_path << " (m = " << b.rank << ")\n";
    return b;
  }
  const SnapshotSet snaps = collect_snapshots(model, cfg.distributions, cfg.snapshots, cfg.seed, execution(cfg));
  const PodModes modes = compute_pod(snaps);
  b.rank = modes.rank;
  b.rb.emplace(model, modes, modes.rank);
  out << "built basis from " << cfg.snapshots << " snapshots, rank " << modes.rank << '\n';
  return b;
}

void write_calibration_table(const fs::path& path, const CalibrationModel& cal) {
  std::ostringstream os;
  os << "m,var_delta\n";
  for (std::size_t r = 0; r < cal.m_values.size(); ++r) os << cal.m_values[r] << ',' << fmt_double(cal.var_delta[r]) << '\n';
  write_file(path, os.str());
}

struct Calibration {
  CalibrationModel model;
  double raw_m = 0.0;
  std::size_t m = 0;  // capped at the basis rank
  bool injected = false;
};

Calibration run_calibration(const RunConfig& cfg, const FullModel& model, const Basis& basis, const fs::path& dir,
                            std::ostream& out) {
  const std::size_t hi = std::min(cfg.calib_m_max, basis.rank);
  if (hi <= cfg.calib_m_min) {
    throw NumericalError("calibration range [" + std::to_string(cfg.calib_m_min) + ", " +
                         std::to_string(cfg.calib_m_max) + "] does not fit the basis rank " +
                         std::to_string(basis.rank));
  }
  std::vector<std::size_t> ms;
  for (std::size_t m = cfg.calib_m_min; m <= hi; ++m) ms.push_back(m);

  Calibration cal;
  cal.model = calibrate(model, *basis.rb, cfg.distributions, ms, cfg.validation_count, cfg.seed, execution(cfg));
  write_calibration_table(dir / "calibration.csv", cal.model);
  if (cfg.calib_c) {
    cal.model.c = *cfg.calib_c;
    cal.model.q = *cfg.calib_q;
    cal.injected = true;
  }
  const auto n = static_cast<double>(cfg.n);
  cal.raw_m = cal.model.raw_m(n);
  cal.m = std::min(cal.model.recommended_m(n), basis.rank);

  std::ostringstream fit;
  fit << "c = " << fmt_double(cal.model.c) << '\n'
      << "q = " << fmt_double(cal.model.q) << '\n'
      << "constants = " << (cal.injected ? "injected" : "fitted") << '\n'
      << "n = " << cfg.n << '\n'
      << "m_raw = " << fmt_double(cal.raw_m) << '\n'
      << "m_recommended = " << cal.model.recommended_m(n) << '\n'
      << "m_used = " << cal.m << '\n'
      << "basis_rank = " << basis.rank << '\n';
  write_file(dir / "calibration_fit.txt", fit.str());
  out << fit.str();
  return cal;
}

std::size_t resolve_m(const RunConfig& cfg, const FullModel& model, const Basis& basis, const fs::path& dir,
                      std::ostream& out) {
  if (cfg.m) {
    if (*cfg.m > basis.rank) {
      throw NumericalError("requested m = " + std::to_string(*cfg.m) + " exceeds the basis rank " +
                           std::to_string(basis.rank));
    }
    return *cfg.m;
  }
  return run_calibration(cfg, model, basis, dir, out).m;
}

// Reduced or full-model output as a function of a parameter row.
struct OutputModel {
  std::optional<ReducedBasis> rb;
  std::string description;
  Evaluator f;
};

OutputModel output_model(const RunConfig& cfg, const FullModel& model, const fs::path& dir, std::ostream& out) {
  OutputModel om;
  if (cfg.full) {
    om.description = "full";
    om.f = [&model](std::span<const double> row) { return model(params_from_row(row)); };
    return om;
  }
  const Basis basis = obtain_basis(cfg, model, out);
  const std::size_t m = resolve_m(cfg, model, basis, dir, out);
  om.rb = basis.rb->truncated(m);
  om.description = "reduced m=" + std::to_string(m);
  const ReducedBasis* rb = &*om.rb;
  om.f = [rb](std::span<const double> row) { return reduced_output(*rb, params_from_row(row)); };
  return om;
}

struct Check {
  std::string name;
  bool pass;
  double value;
  double threshold;
};

double log_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const auto n = static_cast<double>(t.size());
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double ly = std::log(y[k]);
    st += t[k];
    sy += ly;
    stt += t[k] * t[k];
    sty += t[k] * ly;
  }
  return (n * sty - st * sy) / (n * stt - st * st);
}

}  // namespace

fs::path output_directory(const RunConfig& cfg) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("CANALSENSE_OUT"); env && *env) return env;
  return "canalsense-out";
}

void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const FullModel model(cfg.model, cfg.grid());
  const StateTrajectory traj = model.trajectory(cfg.truth);
  const Equilibrium eq = compute_equilibrium(cfg.truth, cfg.model);
  const double g = cfg.model.g;
  const Grid& grid = traj.grid;

  {
    std::ofstream os(dir / "trajectory.csv", std::ios::binary);
    write_trajectory_csv(os, traj, eq.H_star, g);
  }
  std::ostringstream controls, norms;
  controls << "t,U0,UL\n";
  norms << "t,norm\n";
  for (int k = 0; k <= grid.Nt; ++k) {
    const double h0 = from_characteristic(traj.xi1(k, 0), traj.xi2(k, 0), eq.H_star, g).first;
    const double hL = from_characteristic(traj.xi1(k, grid.Nx - 1), traj.xi2(k, grid.Nx - 1), eq.H_star, g).first;
    const GatePositions u =
        control_positions(eq.H_star + h0, eq.H_star + hL, cfg.model, cfg.model.nominal.mu_0, cfg.model.nominal.mu_L);
    controls << fmt_double(grid.t(k)) << ',' << fmt_double(u.U0) << ',' << fmt_double(u.UL) << '\n';
    norms << fmt_double(grid.t(k)) << ',' << fmt_double(traj.step_norm(k)) << '\n';
  }
  write_file(dir / "controls.csv", controls.str());
  write_file(dir / "norms.csv", norms.str());

  std::ostringstream summary;
  summary << "output = " << fmt_double(discrete_output(traj)) << '\n'
          << "stability_margin = " << fmt_double(check_stability(cfg.model.k_0, cfg.model.k_L, eq)) << '\n'
          << "H_star = " << fmt_double(eq.H_star) << '\n'
          << "V_star = " << fmt_double(eq.V_star) << '\n'
          << "Nx = " << grid.Nx << '\n'
          << "Nt = " << grid.Nt << '\n';
  write_file(dir / "summary.txt", summary.str());
  out << summary.str();
}

void cmd_build_rb(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const FullModel model(cfg.model, cfg.grid());
  const SnapshotSet snaps = collect_snapshots(model, cfg.distributions, cfg.snapshots, cfg.seed, execution(cfg));
  const PodModes modes = compute_pod(snaps);
  const std::size_t m = cfg.m.value_or(modes.rank);
  const ReducedBasis rb(model, modes, m);
  {
    std::ofstream os(dir / "basis.rb", std::ios::binary);
    rb.save(os);
    if (!os) throw ConfigError("cannot write basis file");
  }
  std::ostringstream report;
  report << "m,sigma_m,cum_energy\n";
  const double total = modes.sigma.squaredNorm();
  double cum = 0.0;
  for (Eigen::Index k = 0; k < modes.sigma.size(); ++k) {
    cum += modes.sigma[k] * modes.sigma[k];
    report << k + 1 << ',' << fmt_double(modes.sigma[k]) << ',' << fmt_double(total > 0 ? cum / total : 0.0) << '\n';
  }
  write_file(dir / "pod_report.csv", report.str());
  out << "basis m = " << m << " (rank " << modes.rank << ", " << cfg.snapshots << " snapshots) written to "
      << (dir / "basis.rb").string() << '\n';
}

void cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const FullModel model(cfg.model, cfg.grid());
  const Basis basis = obtain_basis(cfg, model, out);
  (void)run_calibration(cfg, model, basis, dir, out);
}

void cmd_sobol(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const FullModel model(cfg.model, cfg.grid());
  const OutputModel om = output_model(cfg, model, dir, out);
  const SensitivityResult r = run_sensitivity(om.f, cfg.distributions, cfg.n, cfg.seed, cfg.level, execution(cfg));
  const auto names = parameter_names();

  std::ostringstream csv, first, total, summary;
  write_index_csv(csv, r, names);
  write_index_plot_data(first, r.first, names);
  write_index_plot_data(total, r.total, names);
  write_file(dir / "sobol_indices.csv", csv.str());
  write_file(dir / "sobol_first.dat", first.str());
  write_file(dir / "sobol_total.dat", total.str());

  summary << "evaluator = " << om.description << '\n'
          << "n = " << r.n << '\n'
          << "evaluations = " << r.evaluations << '\n'
          << "seed = " << cfg.seed << '\n'
          << "level = " << fmt_double(r.level) << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (r.first[i].out_of_range()) summary << "out_of_range = first " << names[i] << '\n';
    if (r.total[i].out_of_range()) summary << "out_of_range = total " << names[i] << '\n';
  }
  write_file(dir / "sobol_summary.txt", summary.str());
  out << summary.str() << csv.str();
}

void cmd_export_samples(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const FullModel model(cfg.model, cfg.grid());
  const OutputModel om = output_model(cfg, model, dir, out);
  const SampleMatrix M = sample_matrix(cfg.distributions, cfg.n, cfg.seed, SampleStream::design_first);
  const std::vector<double> Y = evaluate_rows({M.data(), static_cast<std::size_t>(M.size())}, kNumParams, om.f,
                                              execution(cfg));
  std::ostringstream os;
  const auto names = parameter_names();
  for (const auto& name : names) os << name << ',';
  os << "Y\n";
  for (Eigen::Index j = 0; j < M.rows(); ++j) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) os << fmt_double(M(j, c)) << ',';
    os << fmt_double(Y[static_cast<std::size_t>(j)]) << '\n';
  }
  write_file(dir / "samples.csv", os.str());
  out << "wrote " << M.rows() << " samples (" << om.description << ") to " << (dir / "samples.csv").string() << '\n';
}

void cmd_validate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  std::vector<Check> checks;
  const NominalConfig& nc = cfg.model;
  const PhysicalParams& nom = nc.nominal;

  const Equilibrium eq = compute_equilibrium(nom, nc);
  const double identity = std::abs(nom.S_b * eq.H_star - nom.C * eq.V_star * eq.V_star) / (nom.S_b * eq.H_star);
  checks.push_back({"equilibrium_identity", identity <= 1e-12, identity, 1e-12});
  checks.push_back({"fluvial_ordering", eq.lambda_1 > eq.lambda_2 && eq.lambda_2 > 0.0, eq.lambda_2, 0.0});
  const double margin = check_stability(nc.k_0, nc.k_L, eq);
  checks.push_back({"stability_margin", margin < 1.0, margin, 1.0});

  const BoundaryCoefficients bc = boundary_coefficients(nom, nc);
  checks.push_back({"nominal_upstream_offset", std::abs(bc.A_coef) <= 1e-12, std::abs(bc.A_coef), 1e-12});
  checks.push_back({"nominal_downstream_offset", std::abs(bc.C_coef) <= 1e-12, std::abs(bc.C_coef), 1e-12});
  const double gain0 = std::abs(bc.upstream_gain() - nc.k_0);
  const double gainL = std::abs(bc.downstream_gain() - nc.k_L);
  checks.push_back({"nominal_upstream_gain", gain0 <= 1e-10, gain0, 1e-10});
  checks.push_back({"nominal_downstream_gain", gainL <= 1e-10, gainL, 1e-10});

  {
    std::mt19937_64 gen(cfg.seed);
    std::uniform_real_distribution<double> ud(-10.0, 10.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const double h = ud(gen), v = ud(gen);
      const auto [a, b] = to_characteristic(h, v, eq.H_star, nc.g);
      const auto [h2, v2] = from_characteristic(a, b, eq.H_star, nc.g);
      worst = std::max({worst, std::abs(h2 - h), std::abs(v2 - v)});
    }
    checks.push_back({"characteristic_round_trip", worst <= 1e-12, worst, 1e-12});
  }

  const FullModel model(nc, cfg.grid());
  {
    PhysicalParams mu = nom;
    mu.xi1_0 = 0.01;
    mu.xi2_0 = 0.01;
    SpaceTimeSystem sys = model.system(mu);
    if (cfg.fault == Fault::source_sign) {
      sys.coefficients.gamma = -sys.coefficients.gamma;
      sys.coefficients.delta = -sys.coefficients.delta;
    }
    const StateTrajectory traj = solve_full(sys);
    std::vector<double> t, norms;
    for (int k = 0; k <= traj.grid.Nt; ++k) {
      t.push_back(traj.grid.t(k));
      norms.push_back(traj.step_norm(k));
    }
    const double ratio = norms.back() / norms.front();
    const double slope = log_slope(t, norms);
    checks.push_back({"decay_final_over_initial", ratio < 1.0, ratio, 1.0});
    checks.push_back({"decay_log_slope", slope < 0.0, slope, 0.0});
  }

  {
    const SnapshotSet snaps = collect_snapshots(model, cfg.distributions, cfg.snapshots, cfg.seed, execution(cfg));
    const PodModes modes = compute_pod(snaps);
    const std::size_t m = std::min(cfg.certify_m, modes.rank);
    ReducedBasis rb(model, modes, m);
    if (cfg.fault == Fault::basis_scale) rb.mutable_Z().col(0) *= 1.5;
    const auto k = static_cast<Eigen::Index>(m);
    const double defect = (rb.Z().transpose() * rb.Z() - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    checks.push_back({"basis_orthonormality", defect <= 1e-10, defect, 1e-10});

    std::stringstream buffer;
    rb.save(buffer);
    const ReducedBasis loaded = ReducedBasis::load(buffer, model);
    const double loaded_defect =
        (loaded.Z().transpose() * loaded.Z() - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    checks.push_back({"basis_round_trip_orthonormality", loaded_defect <= 1e-10, loaded_defect, 1e-10});

    const SampleMatrix draws = sample_matrix(cfg.distributions, cfg.certify_count, cfg.seed, SampleStream::certification);
    std::vector<int> violated(cfg.certify_count, 0);
    for_each_index(
        cfg.certify_count,
        [&](std::size_t j) {
          const PhysicalParams mu = params_from_row({draws.row(static_cast<Eigen::Index>(j)).data(), kNumParams});
          const Eigen::VectorXd xi = model.trajectory(mu).xi;
          const Eigen::VectorXd xt = solve_reduced(rb, mu);
          const ErrorBound eb = error_bound(rb, mu, xt);
          const double state = (xi - rb.Z() * xt).norm();
          const double output = std::abs(xi.norm() - xt.norm());
          violated[j] = (state > eb.bound || output > eb.bound) ? 1 : 0;
        },
        execution(cfg));
    const int violations = std::count(violated.begin(), violated.end(), 1);
    checks.push_back({"error_bound_certification", violations == 0, static_cast<double>(violations), 0.0});
  }

  {
    // Analytic oracles: Y = X1 + 2 X2 (standard normal), Y = X1 X2 (uniform on [0, 1]).
    const std::size_t n = 10000;
    const std::vector<Distribution> normals(2, Distribution::normal(0.0, 1.0));
    const std::vector<Distribution> uniforms(2, Distribution::uniform(0.0, 1.0));
    const auto lin = run_sensitivity([](std::span<const double> x) { return x[0] + 2.0 * x[1]; }, normals, n,
                                     cfg.seed, 0.95, execution(cfg));
    const auto prod = run_sensitivity([](std::span<const double> x) { return x[0] * x[1]; }, uniforms, n, cfg.seed,
                                      0.95, execution(cfg));
    auto z = [n](const SobolEstimate& e, double exact) {
      return std::abs(e.value - exact) / (3.0 * e.v_hat / std::sqrt(static_cast<double>(n)));
    };
    const double lin_worst = std::max({z(lin.first[0], 0.2), z(lin.first[1], 0.8), z(lin.total[0], 0.2),
                                       z(lin.total[1], 0.8)});
    const double prod_worst = std::max(z(prod.first[0], 3.0 / 7.0), z(prod.total[0], 4.0 / 7.0));
    checks.push_back({"sobol_linear_gaussian", lin_worst <= 1.0, lin_worst, 1.0});
    checks.push_back({"sobol_product_uniform", prod_worst <= 1.0, prod_worst, 1.0});
  }

  {
    const double raw = m_rule_raw(30000, 0.2414, 0.5070);
    checks.push_back({"basis_size_rule", std::abs(raw - 14.33) <= 5e-3, raw, 14.33});
  }

  std::ostringstream csv;
  csv << "check,status,value,threshold\n";
  int failed = 0;
  for (const Check& c : checks) {
    csv << c.name << ',' << (c.pass ? "pass" : "fail") << ',' << fmt_double(c.value) << ',' << fmt_double(c.threshold)
        << '\n';
    if (!c.pass) ++failed;
  }
  write_file(dir / "validate.csv", csv.str());
  out << csv.str();
  if (failed > 0) throw ValidationError(std::to_string(failed) + " validation check(s) failed");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensitivity analysis of a boundary-controlled channel with a reduced-basis metamodel", "canalsense"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::string m;
  bool full = false;
  std::optional<int> threads;
  std::string out_dir;
  std::optional<double> level;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--n", n, "Monte-Carlo sample size");
  app.add_option("--m", m, "reduced basis size, or auto");
  app.add_flag("--full", full, "use the full model instead of the reduced one");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--level", level, "confidence level");
  app.add_option("--set", overrides, "override any configuration key (key=value)");

  struct Entry {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&, std::ostream&);
  };
  const Entry entries[] = {
      {"simulate", "full-model run: trajectory, gate positions and output", cmd_simulate},
      {"build-rb", "snapshots, POD and basis file", cmd_build_rb},
      {"calibrate", "basis size against sample size", cmd_calibrate},
      {"sobol", "first-order and total indices with confidence intervals", cmd_sobol},
      {"validate", "invariant checks", cmd_validate},
      {"export-samples", "parameter draws with their outputs", cmd_export_samples},
  };
  for (const Entry& e : entries) app.add_subcommand(e.name, e.help)->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = default_config();
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1), Source::flag);
    }
    if (seed) set_value(cfg, "seed", std::to_string(*seed), Source::flag);
    if (n) set_value(cfg, "n", std::to_string(*n), Source::flag);
    if (!m.empty()) set_value(cfg, "m", m, Source::flag);
    if (full) set_value(cfg, "full", "true", Source::flag);
    if (threads) set_value(cfg, "threads", std::to_string(*threads), Source::flag);
    if (!out_dir.empty()) set_value(cfg, "out", out_dir, Source::flag);
    if (level) set_value(cfg, "level", fmt_double(*level), Source::flag);
    cfg.validate();

    for (const Entry& e : entries) {
      if (app.got_subcommand(e.name)) e.run(cfg, out);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    err << "validation failed: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace canalsense::cli
