#pragma once

#include <cmath>

#include "error.hpp"

namespace dipsq {

namespace detail {

// Gauss series, stopped once a term drops below 1e-16 of the running sum.
inline double hyp2f1_series(double a, double b, double c, double z) {
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 100000; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum) && n > 2) return sum;
  }
  throw Error(ErrorKind::tolerance, "hypergeometric series did not converge");
}

}  // namespace detail

// Real 2F1(a, b; c; z) for z <= 0 (the branch needed here), with c not a non-positive
// integer and a - b not an integer. Uses the direct series near zero, the Pfaff
// transformation for moderate |z|, and the 1/z continuation for large |z|.
inline double hyp2f1(double a, double b, double c, double z) {
  require(z <= 0.0, ErrorKind::domain, "hyp2f1 is implemented for z <= 0");
  if (z > -0.9) return detail::hyp2f1_series(a, b, c, z);
  if (z >= -9.0) {
    const double w = z / (z - 1.0);
    return std::pow(1.0 - z, -a) * detail::hyp2f1_series(a, c - b, c, w);
  }
  const double mz = -z;
  const double t1 = std::tgamma(c) * std::tgamma(b - a) / (std::tgamma(b) * std::tgamma(c - a)) * std::pow(mz, -a) *
                    detail::hyp2f1_series(a, 1.0 - c + a, 1.0 - b + a, 1.0 / z);
  const double t2 = std::tgamma(c) * std::tgamma(a - b) / (std::tgamma(a) * std::tgamma(c - b)) * std::pow(mz, -b) *
                    detail::hyp2f1_series(b, 1.0 - c + b, 1.0 - a + b, 1.0 / z);
  return t1 + t2;
}

}  // namespace dipsq
