#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace dipsq {

inline double mean(const std::vector<double>& x) {
  require(!x.empty(), ErrorKind::insufficient_data, "mean of empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double covariance(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::insufficient_data,
          "covariance needs two equal-length samples of size >= 2");
  const double mx = mean(x), my = mean(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size() - 1);
}

inline double variance(const std::vector<double>& x) { return covariance(x, x); }

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double residual = 0.0;  // sum of squared residuals
};

// Least squares of value against 1/L; the intercept is the L -> infinity limit.
inline LinearFit linear_extrapolate_inverseL(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> xs;
  for (const auto& p : points) {
    require(p.first > 0.0, ErrorKind::invalid_argument, "sizes must be positive");
    xs.push_back(1.0 / p.first);
  }
  std::vector<double> uniq = xs;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  require(uniq.size() >= 2, ErrorKind::insufficient_data, "need at least two distinct sizes");
  const double n = static_cast<double>(points.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sx += xs[i];
    sy += points[i].second;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (points[i].second - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double r = points[i].second - (fit.intercept + fit.slope * xs[i]);
    fit.residual += r * r;
  }
  return fit;
}

struct ControlVariateResult {
  double mean = 0.0;
  double raw_mean = 0.0;
  double coefficient = 0.0;
  bool degenerate = false;  // Var(J) was zero; mean is the raw mean
};

inline ControlVariateResult control_variate_adjust(const std::vector<double>& m,
                                                   const std::vector<double>& J,
                                                   double true_mean_J) {
  require(m.size() == J.size(), ErrorKind::invalid_argument, "samples must have equal length");
  require(m.size() >= 3, ErrorKind::insufficient_data, "control variates need at least 3 samples");
  ControlVariateResult out;
  out.raw_mean = mean(m);
  const double vj = variance(J);
  if (!(vj > 0.0)) {
    out.mean = out.raw_mean;
    out.degenerate = true;
    return out;
  }
  out.coefficient = covariance(m, J) / vj;
  out.mean = out.raw_mean - out.coefficient * (mean(J) - true_mean_J);
  return out;
}

struct Curve {
  double L = 0.0;
  std::vector<double> beta;
  std::vector<double> value;
  std::vector<double> error;

  void validate() const {
    require(beta.size() >= 2, ErrorKind::insufficient_data, "curve needs at least two points");
    require(value.size() == beta.size(), ErrorKind::invalid_argument, "curve value/beta length mismatch");
    require(error.empty() || error.size() == beta.size(), ErrorKind::invalid_argument,
            "curve error length mismatch");
    for (std::size_t i = 1; i < beta.size(); ++i)
      require(beta[i] > beta[i - 1], ErrorKind::invalid_argument, "beta must be strictly increasing");
  }
};

using CurveFamily = std::vector<Curve>;

inline double interp_linear(const std::vector<double>& x, const std::vector<double>& y, double t) {
  if (t <= x.front()) return y.front();
  if (t >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  const double w = (t - x[k - 1]) / (x[k] - x[k - 1]);
  return (1.0 - w) * y[k - 1] + w * y[k];
}

// beta where y_{L2} L2^eta - y_{L1} L1^eta changes sign, both curves interpolated
// onto the union of their grids over the common range.
inline double crossing_beta(const Curve& c1, const Curve& c2, double eta) {
  c1.validate();
  c2.validate();
  require(c1.L < c2.L, ErrorKind::invalid_argument, "crossing expects L1 < L2");
  const double lo = std::max(c1.beta.front(), c2.beta.front());
  const double hi = std::min(c1.beta.back(), c2.beta.back());
  require(lo < hi, ErrorKind::no_crossing, "curves share no beta range");
  std::vector<double> grid;
  for (const auto* c : {&c1, &c2})
    for (double b : c->beta)
      if (b >= lo && b <= hi) grid.push_back(b);
  grid.push_back(lo);
  grid.push_back(hi);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const double s1 = std::pow(c1.L, eta), s2 = std::pow(c2.L, eta);
  std::vector<double> d(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    d[i] = s2 * interp_linear(c2.beta, c2.value, grid[i]) - s1 * interp_linear(c1.beta, c1.value, grid[i]);

  std::vector<double> roots;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (d[i] == 0.0) {
      // An exact zero counts once, and only if it separates opposite signs or sits at an end.
      const bool left_sign = i > 0 && d[i - 1] != 0.0;
      const bool right_sign = i + 1 < grid.size() && d[i + 1] != 0.0;
      if (!left_sign || !right_sign || (d[i - 1] > 0) != (d[i + 1] > 0)) roots.push_back(grid[i]);
      continue;
    }
    if (i + 1 < grid.size() && d[i + 1] != 0.0 && (d[i] > 0) != (d[i + 1] > 0)) {
      const double w = d[i] / (d[i] - d[i + 1]);
      roots.push_back(grid[i] + w * (grid[i + 1] - grid[i]));
    }
  }
  // Identical curves give d == 0 everywhere: no isolated crossing.
  const bool all_zero = std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
  require(!all_zero && !roots.empty(), ErrorKind::no_crossing, "difference does not change sign");
  if (roots.size() > 1) {
    std::ostringstream os;
    os << "multiple sign changes at beta =";
    for (double r : roots) os << ' ' << r;
    throw Error(ErrorKind::ambiguous_crossing, os.str());
  }
  return roots.front();
}

struct BootstrapResult {
  double estimate = 0.0;
  double error = 0.0;
};

// Std of the statistic over B resamples with replacement. Replica b draws from
// its own generator, so the result does not depend on evaluation order.
template <class T, class Stat>
BootstrapResult bootstrap_ci(const std::vector<T>& samples, Stat&& statistic, int B, std::uint64_t seed,
                             bool double_errors = false) {
  require(B >= 100, ErrorKind::invalid_argument, "bootstrap needs at least 100 replicas");
  require(!samples.empty(), ErrorKind::insufficient_data, "bootstrap of empty sample");
  BootstrapResult out;
  out.estimate = statistic(samples);
  std::vector<double> reps(static_cast<std::size_t>(B));
  std::vector<T> resample(samples.size());
  for (int b = 0; b < B; ++b) {
    Rng rng(seed, static_cast<std::uint64_t>(b));
    for (auto& r : resample) r = samples[rng.below(samples.size())];
    reps[static_cast<std::size_t>(b)] = statistic(resample);
  }
  const double m = mean(reps);
  double ss = 0.0;
  for (double v : reps) ss += (v - m) * (v - m);
  out.error = std::sqrt(ss / static_cast<double>(B - 1));
  if (double_errors) out.error *= 2.0;
  return out;
}

// Parametric bootstrap of the crossing: every replica redraws each point as
// value + error * N(0, 1). Replicas without a unique crossing are skipped.
inline BootstrapResult crossing_beta_bootstrap(const Curve& c1, const Curve& c2, double eta, int B, std::uint64_t seed,
                                               bool double_errors = false) {
  require(B >= 100, ErrorKind::invalid_argument, "bootstrap needs at least 100 replicas");
  require(c1.error.size() == c1.beta.size() && c2.error.size() == c2.beta.size(), ErrorKind::invalid_argument,
          "bootstrap of a crossing needs per-point errors");
  BootstrapResult out;
  out.estimate = crossing_beta(c1, c2, eta);
  std::vector<double> reps;
  for (int b = 0; b < B; ++b) {
    Rng rng(seed, static_cast<std::uint64_t>(b));
    Curve r1 = c1, r2 = c2;
    for (std::size_t i = 0; i < r1.value.size(); ++i) r1.value[i] += r1.error[i] * rng.normal();
    for (std::size_t i = 0; i < r2.value.size(); ++i) r2.value[i] += r2.error[i] * rng.normal();
    try {
      reps.push_back(crossing_beta(r1, r2, eta));
    } catch (const Error&) {
    }
  }
  require(reps.size() >= static_cast<std::size_t>(B) / 2, ErrorKind::no_crossing,
          "most bootstrap replicas have no unique crossing");
  out.error = std::sqrt(variance(reps));
  if (double_errors) out.error *= 2.0;
  return out;
}

// One-sample Kolmogorov-Smirnov distance between the empirical distribution of x and cdf.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf&& cdf) {
  require(!x.empty(), ErrorKind::insufficient_data, "KS test of empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic Kolmogorov tail probability with Stephens' small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lam = (sn + 0.12 + 0.11 / sn) * d;
  if (lam < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lam * lam);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

struct CollapsePoint {
  double L = 0.0;
  double x = 0.0;
  double y = 0.0;
};

inline std::vector<std::vector<CollapsePoint>> collapse_coordinates(const CurveFamily& curves, double beta_c,
                                                                    double eta, double nu) {
  std::vector<std::vector<CollapsePoint>> out;
  for (const auto& c : curves) {
    c.validate();
    std::vector<CollapsePoint> pts;
    const double sx = std::pow(c.L, 1.0 / nu), sy = std::pow(c.L, eta);
    for (std::size_t i = 0; i < c.beta.size(); ++i) pts.push_back({c.L, sx * (c.beta[i] - beta_c), sy * c.value[i]});
    out.push_back(std::move(pts));
  }
  return out;
}

// Mean squared residual of every point against the piecewise-linear interpolant of
// each other curve, over overlapping x ranges. Zero for a perfect collapse.
inline double collapse_quality(const std::vector<std::vector<CollapsePoint>>& curves) {
  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < curves.size(); ++a)
    for (std::size_t b = 0; b < curves.size(); ++b) {
      if (a == b || curves[b].size() < 2) continue;
      std::vector<double> xb, yb;
      for (const auto& p : curves[b]) {
        xb.push_back(p.x);
        yb.push_back(p.y);
      }
      for (const auto& p : curves[a]) {
        if (p.x < xb.front() || p.x > xb.back()) continue;
        const double r = p.y - interp_linear(xb, yb, p.x);
        ss += r * r;
        ++count;
      }
    }
  if (count == 0) return std::numeric_limits<double>::infinity();
  return ss / static_cast<double>(count);
}

inline double collapse_quality(const CurveFamily& curves, double beta_c, double eta, double nu) {
  return collapse_quality(collapse_coordinates(curves, beta_c, eta, nu));
}

struct GaussianParams {
  double A = 0.0;
  double mu = 0.0;
  double sigma = 1.0;

  double operator()(double x) const { return A * std::exp(-(x - mu) * (x - mu) / (2.0 * sigma * sigma)); }
};

namespace detail {

struct GaussianResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const std::vector<std::pair<double, double>>* pts;

  int inputs() const { return 3; }
  int values() const { return static_cast<int>(pts->size()); }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& fvec) const {
    for (std::size_t i = 0; i < pts->size(); ++i) {
      const double x = (*pts)[i].first;
      const double g = p[0] * std::exp(-(x - p[1]) * (x - p[1]) / (2.0 * p[2] * p[2]));
      fvec[static_cast<Eigen::Index>(i)] = g - (*pts)[i].second;
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
    for (std::size_t i = 0; i < pts->size(); ++i) {
      const double x = (*pts)[i].first;
      const double u = x - p[1];
      const double e = std::exp(-u * u / (2.0 * p[2] * p[2]));
      const auto r = static_cast<Eigen::Index>(i);
      jac(r, 0) = e;
      jac(r, 1) = p[0] * e * u / (p[2] * p[2]);
      jac(r, 2) = p[0] * e * u * u / (p[2] * p[2] * p[2]);
    }
    return 0;
  }
};

}  // namespace detail

struct GaussianFit {
  GaussianParams params;
  double residual = 0.0;  // sum of squared residuals
};

// Least-squares Gaussian fit. The start comes from a quadratic fit to log(y) when
// all values are positive, otherwise from the data maximum and spread.
inline GaussianFit fit_gaussian(const std::vector<std::pair<double, double>>& pts) {
  require(pts.size() >= 4, ErrorKind::insufficient_data, "gaussian fit needs at least 4 points");
  Eigen::VectorXd p(3);
  bool seeded = false;
  if (std::all_of(pts.begin(), pts.end(), [](const auto& q) { return q.second > 0.0; })) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(pts.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      X(r, 0) = 1.0;
      X(r, 1) = pts[i].first;
      X(r, 2) = pts[i].first * pts[i].first;
      y[r] = std::log(pts[i].second);
    }
    const Eigen::Vector3d c = X.colPivHouseholderQr().solve(y);
    if (c[2] < 0.0) {
      const double s2 = -1.0 / (2.0 * c[2]);
      const double mu = c[1] * s2;
      p << std::exp(c[0] + mu * mu / (2.0 * s2)), mu, std::sqrt(s2);
      seeded = std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
    }
  }
  if (!seeded) {
    auto top = std::max_element(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    double lo = pts.front().first, hi = pts.front().first;
    for (const auto& q : pts) {
      lo = std::min(lo, q.first);
      hi = std::max(hi, q.first);
    }
    p << top->second, top->first, std::max(hi - lo, 1e-6) / 2.0;
  }
  detail::GaussianResidual functor{&pts};
  Eigen::LevenbergMarquardt<detail::GaussianResidual> lm(functor);
  lm.parameters.xtol = 1e-15;
  lm.parameters.ftol = 1e-15;
  lm.parameters.maxfev = 4000;
  const auto status = lm.minimize(p);
  Eigen::VectorXd fvec(static_cast<Eigen::Index>(pts.size()));
  functor(p, fvec);
  GaussianFit out;
  out.params = {p[0], p[1], std::abs(p[2])};
  out.residual = fvec.squaredNorm();
  const bool ok = std::isfinite(out.residual) && std::isfinite(p[0]) && std::isfinite(p[1]) && p[2] != 0.0 &&
                  status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters;
  if (!ok) {
    std::ostringstream os;
    os << "gaussian fit diverged (status " << static_cast<int>(status) << ", residual " << out.residual << ")";
    throw Error(ErrorKind::fit_failure, os.str());
  }
  return out;
}

struct GaussianRatioPrediction {
  GaussianFit fit;
  double ratio = 1.0;

  double operator()(double delta) const { return ratio * fit.params(delta); }
};

inline GaussianRatioPrediction gaussian_ratio_extrapolate(const std::vector<std::pair<double, double>>& small_pair_points,
                                                          double ratio_at_delta0) {
  require(ratio_at_delta0 > 0.0, ErrorKind::invalid_argument, "ratio must be positive");
  return {fit_gaussian(small_pair_points), ratio_at_delta0};
}

struct EnergyPoint {
  double beta = 0.0;
  double E = 0.0;
  double err = 0.0;
};

struct InterpolatedValue {
  double value = 0.0;
  double error = 0.0;
};

// Linear interpolation of E(beta) at beta_c. Errors of the two bracketing points are
// combined with the interpolation weights in quadrature.
inline InterpolatedValue interpolate_Ec(const std::vector<EnergyPoint>& pts, double beta_c) {
  require(pts.size() >= 2, ErrorKind::insufficient_data, "need at least two energy points");
  for (std::size_t i = 1; i < pts.size(); ++i)
    require(pts[i].beta > pts[i - 1].beta, ErrorKind::invalid_argument, "beta must be strictly increasing");
  require(beta_c >= pts.front().beta && beta_c <= pts.back().beta, ErrorKind::extrapolation_refused,
          "beta_c lies outside the sampled range");
  std::size_t k = 1;
  while (k + 1 < pts.size() && pts[k].beta < beta_c) ++k;
  const auto& p0 = pts[k - 1];
  const auto& p1 = pts[k];
  const double w = (beta_c - p0.beta) / (p1.beta - p0.beta);
  InterpolatedValue out;
  out.value = (1.0 - w) * p0.E + w * p1.E;
  out.error = std::hypot((1.0 - w) * p0.err, w * p1.err);
  return out;
}

}  // namespace dipsq
