#include "canalsense/channel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "canalsense/errors.hpp"

namespace canalsense {

namespace {

constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "h_s", "B", "S_b", "C", "z_up", "xi1_0", "xi2_0", "mu_0", "mu_L"};

[[noreturn]] void domain_fail(const std::string& what) { throw DomainError(what); }

void require_positive(double value, std::string_view name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream os;
    os << name << " must be strictly positive (got " << value << ")";
    domain_fail(os.str());
  }
}

double checked_sqrt(double radicand, std::string_view term) {
  if (!(radicand >= 0.0)) {
    std::ostringstream os;
    os << "negative radicand in " << term << " (" << radicand << ")";
    domain_fail(os.str());
  }
  return std::sqrt(radicand);
}

// sgn(w) |w|^(3/2), the odd continuation of the weir discharge law.
double signed_pow_three_halves(double w) { return std::copysign(std::pow(std::abs(w), 1.5), w); }

struct DownstreamCoefficients {
  double C_coef;
  double D_coef;
};

// First-order expansion in h = H(L) - H* of
//   V(L) = sqrt(2g) mu_L / H(L) * W(H(L))^(3/2),
//   W(H) = e_h + (H (V_nom + alpha_L beta_nom (H - H_nom)) / (sqrt(2g) mu_L,nom))^(2/3),
// with C = V(L)|_{h=0} - V* and D = dV(L)/dh|_{h=0}.
DownstreamCoefficients downstream_taylor(const PhysicalParams& p, const NominalConfig& cfg, const Equilibrium& eq,
                                         const Equilibrium& nom, double alpha_L) {
  const double K = std::sqrt(2.0 * cfg.g);
  const double H = eq.H_star;
  const double beta_nom = nom.beta;
  const double gain = alpha_L * beta_nom;

  const double flow = H * (nom.V_star + gain * (H - nom.H_star));
  const double dflow = nom.V_star + gain * (2.0 * H - nom.H_star);
  const double x = flow / (K * cfg.nominal.mu_L);
  if (x == 0.0) domain_fail("downstream linearization: commanded flow at x=L is zero (infinite gain D)");

  const double head = signed_pow_two_thirds(x);
  const double dhead = (2.0 / 3.0) * (dflow / (K * cfg.nominal.mu_L)) / std::cbrt(x);
  const double W = (cfg.nominal.h_s - p.h_s) + head;
  const double W32 = signed_pow_three_halves(W);

  DownstreamCoefficients out{};
  out.C_coef = K * p.mu_L * W32 / H - eq.V_star;
  out.D_coef = K * p.mu_L * (1.5 * std::sqrt(std::abs(W)) * dhead / H - W32 / (H * H));
  return out;
}

// Closed forms exactly as printed in the published derivation.
DownstreamCoefficients downstream_appendix(const PhysicalParams& p, const NominalConfig& cfg, const Equilibrium& eq,
                                           const Equilibrium& nom, double alpha_L) {
  const double g = cfg.g;
  const double H = eq.H_star;
  const double Hn = nom.H_star;
  const double Vn = nom.V_star;
  const double bn = nom.beta;
  const double hsn = cfg.nominal.h_s;
  const double hs = p.h_s;
  const double sqrt2 = std::sqrt(2.0);
  const double two_23 = std::cbrt(4.0);  // 2^(2/3)

  const double lever = -Vn + alpha_L * bn * Hn;
  const double X23 = signed_pow_two_thirds(-H * lever / (std::sqrt(g) * cfg.nominal.mu_L));
  const double root = checked_sqrt(4.0 * hsn - 4.0 * hs + 2.0 * two_23 * X23, "C/D (downstream head)");

  DownstreamCoefficients out{};
  out.C_coef = std::sqrt(2.0 * g) / 4.0 * p.mu_L * (2.0 * hsn - 2.0 * hs + two_23 * X23) * root / H;
  const double bracket = std::pow(2.0, 1.0 / 6.0) * X23 * alpha_L * bn * H - sqrt2 * Vn * hsn + sqrt2 * Vn * hs +
                         sqrt2 * alpha_L * bn * Hn * hsn - sqrt2 * alpha_L * bn * Hn * hs;
  out.D_coef = -0.5 * bracket * root * p.mu_L * std::sqrt(g) / (lever * H * H);
  return out;
}

}  // namespace

std::array<double, kNumParams> PhysicalParams::to_array() const {
  return {h_s, B, S_b, C, z_up, xi1_0, xi2_0, mu_0, mu_L};
}

PhysicalParams PhysicalParams::from_array(const std::array<double, kNumParams>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
}

const std::array<std::string_view, kNumParams>& param_names() { return kParamNames; }

std::string_view to_string(BoundaryLinearization mode) {
  switch (mode) {
    case BoundaryLinearization::taylor:
      return "taylor";
    case BoundaryLinearization::appendix:
      return "appendix";
  }
  return "taylor";
}

BoundaryLinearization boundary_linearization_from_string(std::string_view name) {
  if (name == "taylor") return BoundaryLinearization::taylor;
  if (name == "appendix") return BoundaryLinearization::appendix;
  throw ConfigError("bc_linearization: expected 'taylor' or 'appendix', got '" + std::string(name) + "'");
}

void NominalConfig::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be strictly positive");
  };
  positive(Q_star, "Q_star");
  positive(g, "g");
  positive(L, "L");
  positive(T_star, "T_star");
  positive(nominal.B, "B");
  positive(nominal.C, "C");
  positive(nominal.S_b, "S_b");
  positive(nominal.mu_0, "mu_0");
  positive(nominal.mu_L, "mu_L");
  if (!(std::abs(k_0) < 1.0)) throw ConfigError("k_0 must satisfy |k_0| < 1");
  if (!(std::abs(k_L) < 1.0)) throw ConfigError("k_L must satisfy |k_L| < 1");
  try {
    const Equilibrium eq = compute_equilibrium(nominal, *this);
    if (!(nominal.z_up > eq.H_star)) throw ConfigError("z_up must exceed the nominal equilibrium depth");
  } catch (const DomainError& e) {
    throw ConfigError(std::string("nominal parameters: ") + e.what());
  }
}

Equilibrium compute_equilibrium(double S_b, double C, double B, double Q_star, double g) {
  require_positive(S_b, "S_b");
  require_positive(C, "C");
  require_positive(B, "B");
  require_positive(Q_star, "Q_star");
  require_positive(g, "g");

  Equilibrium eq{};
  eq.V_star = std::cbrt(S_b * Q_star / (B * C));
  eq.H_star = Q_star / (B * eq.V_star);
  const double celerity = std::sqrt(g * eq.H_star);
  if (!(g * eq.H_star > eq.V_star * eq.V_star)) {
    std::ostringstream os;
    os << "non-fluvial equilibrium: g*H* = " << g * eq.H_star << " <= V*^2 = " << eq.V_star * eq.V_star;
    domain_fail(os.str());
  }
  eq.lambda_1 = eq.V_star + celerity;
  eq.lambda_2 = celerity - eq.V_star;
  const double friction = g * C * eq.V_star * eq.V_star / eq.H_star;
  eq.gamma = friction * (1.0 / eq.V_star - 1.0 / (2.0 * celerity));
  eq.delta = friction * (1.0 / eq.V_star + 1.0 / (2.0 * celerity));
  eq.beta = std::sqrt(g / eq.H_star);
  return eq;
}

Equilibrium compute_equilibrium(const PhysicalParams& p, const NominalConfig& cfg) {
  return compute_equilibrium(p.S_b, p.C, p.B, cfg.Q_star, cfg.g);
}

double check_stability(double k_0, double k_L, const Equilibrium& eq) {
  const double ratio = std::sqrt(eq.lambda_1 * eq.gamma / (eq.lambda_2 * eq.delta));
  return std::max(std::abs(k_0) * ratio, std::abs(k_L) / ratio);
}

std::pair<double, double> to_characteristic(double h, double v, double H_star, double g) {
  const double beta = std::sqrt(g / H_star);
  return {v + h * beta, v - h * beta};
}

std::pair<double, double> from_characteristic(double xi1, double xi2, double H_star, double g) {
  const double beta = std::sqrt(g / H_star);
  return {(xi1 - xi2) / (2.0 * beta), 0.5 * (xi1 + xi2)};
}

BoundaryCoefficients boundary_coefficients(const PhysicalParams& p, const NominalConfig& cfg) {
  require_positive(p.mu_0, "mu_0");
  require_positive(p.mu_L, "mu_L");
  const Equilibrium eq = compute_equilibrium(p, cfg);
  const Equilibrium nom = compute_equilibrium(cfg.nominal, cfg);

  const double H = eq.H_star;
  const double z = p.z_up;
  const double zn = cfg.nominal.z_up;
  if (!(z > H)) domain_fail("A/B: upstream level z_up must exceed H* (sqrt(z_up - H))");
  if (!(zn > H)) domain_fail("A/B: nominal z_up must exceed H* (sqrt(z_up,nom - H))");

  const double alpha = (1.0 + cfg.k_0) / (1.0 - cfg.k_0);
  const double alpha_L = (1.0 + cfg.k_L) / (1.0 - cfg.k_L);

  BoundaryCoefficients bc{};
  bc.beta_nom = nom.beta;
  bc.beta_true = eq.beta;

  const double commanded = nom.V_star - alpha * bc.beta_nom * (H - nom.H_star);
  const double scale =
      p.mu_0 / cfg.nominal.mu_0 * checked_sqrt((H - z) / (H - zn), "A/B ((H*-z_up)/(H*-z_up,nom))");
  bc.A_coef = scale * commanded - eq.V_star;
  bc.B_coef = scale * (-alpha * bc.beta_nom + (z - zn) * commanded / (2.0 * (H - z) * (H - zn)));

  const DownstreamCoefficients down = cfg.linearization == BoundaryLinearization::taylor
                                          ? downstream_taylor(p, cfg, eq, nom, alpha_L)
                                          : downstream_appendix(p, cfg, eq, nom, alpha_L);
  bc.C_coef = down.C_coef;
  bc.D_coef = down.D_coef;

  bc.w0 = (bc.B_coef + bc.beta_true) / (2.0 * bc.beta_true);
  bc.wL = (bc.D_coef - bc.beta_true) / (2.0 * bc.beta_true);
  return bc;
}

double signed_pow_two_thirds(double x) { return std::cbrt(x * x); }

GatePositions control_positions(double H0, double HL, const NominalConfig& cfg, double mu_0, double mu_L) {
  const Equilibrium nom = compute_equilibrium(cfg.nominal, cfg);
  const double zn = cfg.nominal.z_up;
  if (!(H0 < zn)) {
    std::ostringstream os;
    os << "U0: measured depth H(0) = " << H0 << " must stay below z_up,nom = " << zn;
    domain_fail(os.str());
  }
  const double alpha = (1.0 + cfg.k_0) / (1.0 - cfg.k_0);
  const double alpha_L = (1.0 + cfg.k_L) / (1.0 - cfg.k_L);
  const double K = std::sqrt(2.0 * cfg.g);

  GatePositions u{};
  u.U0 = H0 * (nom.V_star - alpha * (H0 - nom.H_star) * nom.beta) / (mu_0 * std::sqrt(2.0 * cfg.g * (zn - H0)));
  const double q = HL * (nom.V_star + alpha_L * (HL - nom.H_star) * nom.beta) / (K * mu_L);
  u.UL = -signed_pow_two_thirds(q) + HL - cfg.nominal.h_s;
  return u;
}

}  // namespace canalsense
