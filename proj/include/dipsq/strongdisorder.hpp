#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "error.hpp"
#include "hypergeometric.hpp"
#include "localfields.hpp"

namespace dipsq {

enum class Regime { asymptotic, preasymptotic };

inline const char* to_string(Regime r) { return r == Regime::asymptotic ? "asymptotic" : "preasymptotic"; }

// Continuum estimate of the x-state energy per spin.
inline double e_x(double f, double a = 1.0, double J = 1.0) { return -M_PI * J * f / (4.0 * a * a * a); }

struct HeisenbergExcitation {
  double value = 0.0;
  double prefactor = 0.0;  // value / f^{3/2}
};

// Twice the typical coupling, 2 pi rho J / r_typ.
inline HeisenbergExcitation heisenberg_excitation(double f, double a = 1.0, double J = 1.0) {
  HeisenbergExcitation out;
  out.value = 2.0 * M_PI * spin_density(f, a) * J / r_typ(f, a);
  out.prefactor = out.value / std::pow(f, 1.5);
  return out;
}

// Dimer separation below which the dimer is frozen at temperature T_c. No finite
// radius exists at or above the Heisenberg point.
inline std::optional<double> freezing_radius(double delta, double Tc, double J = 1.0) {
  require(Tc > 0.0, ErrorKind::invalid_argument, "T_c must be positive");
  if (delta >= 1.0) return std::nullopt;
  return std::cbrt((1.0 - delta) * J / (2.0 * Tc));
}

inline double dimer_gs_energy(double Jij, double delta, double h) {
  require(Jij > 0.0 && h >= 0.0, ErrorKind::invalid_argument, "need J_ij > 0 and h >= 0");
  const double g = Jij * (1.0 - delta) / 4.0;
  return -(Jij / 4.0 + std::sqrt(h * h + g * g));
}

enum class EcMethod { quadrature, hypergeometric };

// Change of the critical energy per spin from dimers relative to the Heisenberg point,
// (1/2) int_a^inf 2 pi r rho [E_gs(r) - E_gs^{Delta=1}(r)] dr with J_ij = J / r^3.
inline double delta_Ec(double f, double delta, double h, double a = 1.0, double J = 1.0,
                       EcMethod method = EcMethod::hypergeometric) {
  require(f > 0.0 && f <= 1.0, ErrorKind::invalid_argument, "filling must lie in (0, 1]");
  require(h >= 0.0, ErrorKind::invalid_argument, "field must be non-negative");
  if (delta == 1.0) return 0.0;
  const double rho = spin_density(f, a);
  if (method == EcMethod::hypergeometric) {
    require(h > 0.0, ErrorKind::invalid_argument, "the closed form needs h > 0");
    const double g = (1.0 - delta) * J / (4.0 * a * a * a * h);
    return -0.5 * M_PI * f * h * (1.0 - hyp2f1(-0.5, -1.0 / 3.0, 2.0 / 3.0, -g * g));
  }
  // With t = a / r the integral becomes pi rho a^2 int_0^1 t^{-3} [h - sqrt(h^2 + x^2)] dt,
  // x = k t^3, k = J (1 - Delta) / (4 a^3). The bracket is rewritten as -x^2 / (h + sqrt(h^2 + x^2)).
  const double k = J * (1.0 - delta) / (4.0 * a * a * a);
  auto integrand = [&](double t) {
    if (t == 0.0) return h == 0.0 ? -std::abs(k) : 0.0;
    const double x = k * t * t * t;
    const double diff = -x * x / (h + std::sqrt(h * h + x * x));
    return diff / (t * t * t);
  };
  double err = 0.0;
  const double val = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 1.0, 20, 1e-14, &err);
  require(std::abs(err) <= 1e-9 * std::max(std::abs(val), 1e-300) || std::abs(val) < 1e-300, ErrorKind::tolerance,
          "quadrature did not reach tolerance");
  return M_PI * rho * a * a * val;
}

struct BoundaryAnchor {
  double f0 = 0.0;
  double one_minus_delta_c = 0.0;
};

struct BoundaryValue {
  double one_minus_delta_c = 0.0;
  // Filling at which the two anchored forms coincide (the anchor, by construction).
  double anchored_crossover = 0.0;
};

inline BoundaryValue delta_c_boundary(double f, Regime regime, const std::optional<BoundaryAnchor>& anchor) {
  require(anchor.has_value(), ErrorKind::unanchored, "the boundary prefactor needs an anchor point");
  require(anchor->f0 > 0.0 && anchor->one_minus_delta_c > 0.0, ErrorKind::invalid_argument, "invalid anchor");
  require(f > 0.0 && f <= 1.0, ErrorKind::invalid_argument, "filling must lie in (0, 1]");
  BoundaryValue out;
  const double ratio = f / anchor->f0;
  out.one_minus_delta_c = anchor->one_minus_delta_c * (regime == Regime::asymptotic ? std::sqrt(ratio) : ratio);
  out.anchored_crossover = anchor->f0;
  return out;
}

// 1 - Delta_c from |delta_Ec(Delta)| = kappa * h with h the Heisenberg excitation scale.
inline double self_consistent_boundary(double f, double kappa = 1.0, double a = 1.0, double J = 1.0) {
  require(kappa > 0.0, ErrorKind::invalid_argument, "kappa must be positive");
  const double h = heisenberg_excitation(f, a, J).value;
  auto g = [&](double u) { return -delta_Ec(f, 1.0 - u, h, a, J) - kappa * h; };
  double hi = 1e-6;
  while (g(hi) < 0.0) {
    hi *= 2.0;
    require(hi < 1e12, ErrorKind::bracket_failure, "no self-consistent anisotropy found");
  }
  const double lo = hi / 2.0 < 1e-6 ? 0.0 : hi / 2.0;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (r.first + r.second);
}

// Leading-order forms of the self-consistent boundary and their meeting point
// kappa / (8 pi): sqrt(f) below it, linear in f above it.
struct ScalingForms {
  double asymptotic_coefficient = 0.0;     // 1 - Delta_c ~ c_a sqrt(f)
  double preasymptotic_coefficient = 0.0;  // 1 - Delta_c ~ c_p f
  double crossover_f = 0.0;
};

inline ScalingForms self_consistent_scaling(double kappa = 1.0) {
  const double C = heisenberg_excitation(1.0).prefactor;
  ScalingForms s;
  s.asymptotic_coefficient = 4.0 * C * kappa / M_PI;
  s.preasymptotic_coefficient = C * std::sqrt(128.0 * kappa / M_PI);
  s.crossover_f = kappa / (8.0 * M_PI);
  return s;
}

}  // namespace dipsq
