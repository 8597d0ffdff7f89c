#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "error.hpp"
#include "lattice.hpp"

namespace dipsq {

// Per-site lattice sums of r^{-3}, r^{-6}, r^{-9} and the closed-triangle sum, all
// in units a = J = 1.
struct SumConstants {
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;
  double s_tri = 0.0;

  bool valid() const { return s1 > s2 && s2 > s3 && s3 > 0.0 && s_tri > 0.0; }
};

inline SumConstants compute_sum_constants(double rel_tol = 1e-8,
                                          const std::vector<int>& sizes = {16, 24, 32, 48, 64}) {
  SumConstants c;
  c.s1 = lattice_sum(1, rel_tol);
  c.s2 = lattice_sum(2, rel_tol);
  c.s3 = lattice_sum(3, rel_tol);
  c.s_tri = triangle_sum(sizes).intercept;
  return c;
}

// Computed once per process.
inline const SumConstants& default_constants() {
  static const SumConstants c = compute_sum_constants();
  return c;
}

inline void check_filling(double f) {
  require(f > 0.0 && f <= 1.0, ErrorKind::invalid_argument, "filling must lie in (0, 1]");
}

inline double tc_mean_field(double f, const SumConstants& c, double J = 1.0) {
  check_filling(f);
  return J * f * c.s1 / 4.0;
}

struct BCoefficients {
  double B0 = 0.25;
  double B1 = 0.0;
  double B2 = 0.0;
  double B3 = 0.0;
};

// Thermodynamic-limit coefficients on the diluted lattice. Every per-spin sum over
// occupied partners carries one factor of f per free site index.
inline BCoefficients b_coefficients(double f, double delta, const SumConstants& c, double J = 1.0) {
  check_filling(f);
  const double d = delta;
  const double q2 = 4.0 + d + d * d;
  BCoefficients b;
  b.B1 = -J * f * c.s1 / 16.0;
  b.B2 = J * J * (2.0 * f * f * c.s1 * c.s1 - (2.0 / 3.0) * q2 * f * c.s2) / 64.0;
  b.B3 = J * J * J *
         (-6.0 * f * f * f * c.s1 * c.s1 * c.s1 + 2.0 * (4.0 + d * d * d) * f * f * c.s_tri +
          4.0 * q2 * f * f * c.s2 * c.s1 - 2.0 * (3.0 + 4.0 * d + d * d) * f * c.s3) /
         256.0;
  return b;
}

// Same coefficients for an explicit finite coupling matrix (per spin), with no
// factorization assumptions.
inline BCoefficients b_coefficients(const Eigen::MatrixXd& C, double delta) {
  const double N = static_cast<double>(C.rows());
  require(C.rows() >= 1 && C.rows() == C.cols(), ErrorKind::invalid_argument, "coupling matrix must be square");
  const double d = delta;
  const Eigen::MatrixXd C2 = C * C;
  const Eigen::MatrixXd Csq = C.cwiseProduct(C);
  const double S1 = C.sum();
  const double S2 = Csq.sum();
  const double S3 = C.cwiseProduct(Csq).sum();
  const double P2 = C2.sum();
  const double P3 = (C2 * C).sum();
  const double T = C2.cwiseProduct(C).sum();
  const double S21 = (Csq * C).sum();
  BCoefficients b;
  b.B1 = -S1 / (16.0 * N);
  b.B2 = (2.0 * P2 - (2.0 / 3.0) * (4.0 + d + d * d) * S2) / (64.0 * N);
  b.B3 = (-6.0 * P3 + 2.0 * (4.0 + d * d * d) * T + 4.0 * (4.0 + d + d * d) * S21 -
          2.0 * (3.0 + 4.0 * d + d * d) * S3) /
         (256.0 * N);
  return b;
}

inline double ce1_constant(const SumConstants& c) { return 2.0 * c.s2 / (3.0 * c.s1 * c.s1); }

inline double beta_c_ce1(double f, double delta, const SumConstants& c, double J = 1.0) {
  const double beta_mf = 1.0 / tc_mean_field(f, c, J);
  return (1.0 + ce1_constant(c) * (4.0 + delta + delta * delta) / f) * beta_mf;
}

struct SeriesValue {
  double beta = 0.0;
  // The lambda -> 1 truncation lacks a hierarchy of scales; callers should treat
  // the value as indicative only. Always set for order 2.
  bool uncontrolled = false;
};

// Inverse critical temperature from the lambda series, truncated after `order`
// (0: mean field, 1: first-order cluster expansion, 2: second order).
inline SeriesValue beta_c_series_ce2(const BCoefficients& b, double lambda, int order = 2) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::invalid_argument, "lambda must lie in [0, 1]");
  require(order >= 0 && order <= 2, ErrorKind::invalid_argument, "series order must be 0, 1 or 2");
  require(b.B1 != 0.0, ErrorKind::singular, "B1 vanishes");
  const double B1 = b.B1, B2 = b.B2, B3 = b.B3;
  SeriesValue out;
  out.beta = -1.0 / (4.0 * B1);
  if (order >= 1) out.beta += lambda * (-8.0 * B1 * B1 + B2) / (16.0 * B1 * B1 * B1);
  if (order >= 2) {
    out.beta += lambda * lambda * (-128.0 * std::pow(B1, 4) + 36.0 * B1 * B1 * B2 - 4.0 * B2 * B2 + B1 * B3) /
                (128.0 * std::pow(B1, 5));
    out.uncontrolled = true;
  }
  return out;
}

inline SeriesValue beta_c_series_ce2(double f, double delta, const SumConstants& c, double lambda, int order = 2,
                                     double J = 1.0) {
  return beta_c_series_ce2(b_coefficients(f, delta, c, J), lambda, order);
}

struct PeakAnisotropy {
  double value = 0.0;
  // False once the formula leaves the physical range Delta <= 1 (it grows like 1/f).
  bool in_domain = true;
};

inline PeakAnisotropy delta_peak_ce2(double f, const SumConstants& c) {
  check_filling(f);
  PeakAnisotropy out;
  out.value = -0.5 + (9.0 / 16.0) * (c.s3 / f - c.s_tri) / (c.s1 * c.s2);
  out.in_domain = out.value <= 1.0;
  return out;
}

// Maximizer of a unimodal function on [lo, hi] by golden-section search.
template <class Fn>
double golden_section_max(Fn&& fn, double lo, double hi, double tol = 1e-12) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = fn(x1), f2 = fn(x2);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = fn(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = fn(x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace dipsq
