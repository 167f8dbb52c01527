#pragma once

// Physical model of a single channel reach with an underflow gate at x = 0
// and an overflow gate at x = L: uniform equilibrium, characteristic
// coordinates, gate feedback laws and the linearized boundary rows that
// result when the controller is tuned on nominal parameter values.

#include <array>
#include <cstddef>
#include <string_view>
#include <utility>

namespace canalsense {

inline constexpr std::size_t kNumParams = 9;

/// One realization of the uncertain parameter vector, in the canonical order
/// (h_s, B, S_b, C, z_up, xi1_0, xi2_0, mu_0, mu_L).
struct PhysicalParams {
  double h_s = 4.0;      ///< fixed overflow-gate height (m)
  double B = 80.0;       ///< channel width (m)
  double S_b = 2e-4;     ///< bottom slope
  double C = 1e-3;       ///< friction coefficient
  double z_up = 10.0;    ///< upstream water level (m)
  double xi1_0 = 0.0;    ///< initial first characteristic (m/s)
  double xi2_0 = 0.0;    ///< initial second characteristic (m/s)
  double mu_0 = 0.65;    ///< upstream gate flow coefficient
  double mu_L = 0.65;    ///< downstream gate flow coefficient

  [[nodiscard]] std::array<double, kNumParams> to_array() const;
  [[nodiscard]] static PhysicalParams from_array(const std::array<double, kNumParams>& values);
  friend bool operator==(const PhysicalParams&, const PhysicalParams&) = default;
};

/// Column names in canonical order, as used in CSV headers and config keys.
[[nodiscard]] const std::array<std::string_view, kNumParams>& param_names();

/// How the real-vs-nominal gate relations are linearized at x = L.
enum class BoundaryLinearization {
  taylor,    ///< first-order expansion of the downstream gate relation
  appendix,  ///< literal closed forms of the published derivation
};

[[nodiscard]] std::string_view to_string(BoundaryLinearization mode);
[[nodiscard]] BoundaryLinearization boundary_linearization_from_string(std::string_view name);

struct NominalConfig {
  PhysicalParams nominal{};
  double k_0 = 0.6;
  double k_L = 0.7;
  double Q_star = 50.0;
  double g = 9.81;
  double L = 250.0;
  double T_star = 75.0;
  BoundaryLinearization linearization = BoundaryLinearization::taylor;

  /// Throws ConfigError when a field is out of its admissible range.
  void validate() const;
};

struct Equilibrium {
  double H_star;
  double V_star;
  double lambda_1;
  double lambda_2;
  double gamma;
  double delta;
  double beta;  ///< sqrt(g / H_star)
};

struct BoundaryCoefficients {
  double A_coef;
  double B_coef;
  double C_coef;
  double D_coef;
  double w0;
  double wL;
  double beta_true;
  double beta_nom;

  /// Reflection gain k such that the x = 0 row reads xi1 = k * xi2 when A_coef = 0.
  [[nodiscard]] double upstream_gain() const { return -w0 / (1.0 - w0); }
  /// Reflection gain k such that the x = L row reads xi2 = k * xi1 when C_coef = 0.
  [[nodiscard]] double downstream_gain() const { return wL / (1.0 + wL); }
};

[[nodiscard]] Equilibrium compute_equilibrium(double S_b, double C, double B, double Q_star, double g);

/// Equilibrium of the parameters `p` under the flow and gravity of `cfg`.
[[nodiscard]] Equilibrium compute_equilibrium(const PhysicalParams& p, const NominalConfig& cfg);

/// Left-hand side of the exponential-stability condition; the closed loop is
/// stable when the returned margin is below one.
[[nodiscard]] double check_stability(double k_0, double k_L, const Equilibrium& eq);

/// (h, v) deviations to (xi1, xi2).
[[nodiscard]] std::pair<double, double> to_characteristic(double h, double v, double H_star, double g);
/// (xi1, xi2) to (h, v) deviations.
[[nodiscard]] std::pair<double, double> from_characteristic(double xi1, double xi2, double H_star, double g);

[[nodiscard]] BoundaryCoefficients boundary_coefficients(const PhysicalParams& true_params,
                                                         const NominalConfig& cfg);

struct GatePositions {
  double U0;
  double UL;
};

/// Gate openings commanded by the nominal-parameter controller from the
/// measured depths H0 = H(0,t) and HL = H(L,t). `mu_0` and `mu_L` are the gate
/// flow coefficients the controller uses.
[[nodiscard]] GatePositions control_positions(double H0, double HL, const NominalConfig& cfg, double mu_0,
                                              double mu_L);

/// Real branch x^(2/3) := (x^2)^(1/3), defined for negative x.
[[nodiscard]] double signed_pow_two_thirds(double x);

}  // namespace canalsense
