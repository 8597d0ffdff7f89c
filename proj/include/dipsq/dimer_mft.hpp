#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <tuple>
#include <utility>
#include <vector>

#include "error.hpp"
#include "lattice.hpp"
#include "meanfield.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace dipsq {

struct Pairing {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> unpaired;
};

// Squared separation in lattice units, minimum image on the torus for periodic mode.
inline double separation2(const Site& a, const Site& b, int L, Boundary mode) {
  int dx = std::abs(a.x - b.x), dy = std::abs(a.y - b.y);
  if (mode == Boundary::periodic_images) {
    dx = std::min(dx, L - dx);
    dy = std::min(dy, L - dy);
  }
  return static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
}

// Repeatedly pairs the globally closest unmatched spins; ties go to the lowest (i, j).
// Scanning all pairs in (distance, i, j) order and skipping used spins is the same
// procedure.
inline Pairing match_pairs(const Realization& r, Boundary mode = Boundary::open) {
  const std::size_t n = r.N();
  require(n >= 2, ErrorKind::insufficient_data, "matching needs at least two spins");
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  cand.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) cand.emplace_back(separation2(r.sites[i], r.sites[j], r.spec.L, mode), i, j);
  std::sort(cand.begin(), cand.end());
  std::vector<char> used(n, 0);
  Pairing p;
  for (const auto& [d2, i, j] : cand) {
    if (used[i] || used[j]) continue;
    used[i] = used[j] = 1;
    p.pairs.emplace_back(i, j);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!used[i]) p.unpaired.push_back(i);
  return p;
}

inline Pairing no_pairs(std::size_t n) {
  Pairing p;
  for (std::size_t i = 0; i < n; ++i) p.unpaired.push_back(i);
  return p;
}

struct DimerChi {
  double off = 0.0;
  double diag = 0.0;
};

// Imaginary-time integrated sx-sx correlations inside an isolated XXZ dimer.
inline DimerChi chi_dimer_entries(double beta, double J, double delta) {
  require(beta > 0.0 && J > 0.0, ErrorKind::invalid_argument, "beta and J must be positive");
  require(delta != -1.0, ErrorKind::singular, "anisotropy -1 is singular for the dimer block");
  const double x = std::exp(-beta * J);
  DimerChi out;
  if (std::abs(1.0 - delta) < 1e-6) {
    const double bj = beta * J;
    out.off = (bj - 1.0 + x) / (2.0 * J * (3.0 + x));
    out.diag = (bj + 1.0 - x) / (2.0 * J * (3.0 + x));
    return out;
  }
  const double y = 2.0 * std::exp(-beta * J * (1.0 - delta) / 2.0);
  const double den = J * (1.0 - delta * delta) * (1.0 + x + y);
  out.off = (delta * (1.0 - x) + (1.0 + x - y)) / den;
  out.diag = (delta * (1.0 + x - y) + (1.0 - x)) / den;
  return out;
}

// Total sx susceptibility of an isolated dimer (sum of all four block entries),
// with gap E_gap = J (1 - Delta) / 2 between the m=0 triplet and the m=±1 states.
inline double dimer_chi(double T, double J, double delta) {
  require(T > 0.0 && J > 0.0, ErrorKind::invalid_argument, "T and J must be positive");
  const double gap = J * (1.0 - delta) / 2.0;
  const double xj = std::exp(-J / T);
  if (std::abs(gap) < 1e-12 * J) return (2.0 / T) / (3.0 + xj);
  const double g = gap / T;
  return (2.0 * (-std::expm1(-g)) / gap) / (1.0 + xj + 2.0 * std::exp(-g));
}

struct ChiPeak {
  double gap_over_T = 0.0;
  double ratio = 0.0;
};

// Peak of chi / chi_H in the J >> T regime, where the ratio only depends on g = E_gap/T:
// 3 (1 - e^{-g}) / (g (1 + 2 e^{-g})).
inline ChiPeak chi_peak() {
  auto ratio = [](double g) { return 3.0 * (-std::expm1(-g)) / (g * (1.0 + 2.0 * std::exp(-g))); };
  ChiPeak p;
  p.gap_over_T = golden_section_max(ratio, 1e-3, 10.0, 1e-14);
  p.ratio = ratio(p.gap_over_T);
  return p;
}

// Row sums of the block susceptibility: u = chi * 1.
inline Eigen::VectorXd dimer_row_sums(double beta, const Eigen::MatrixXd& C, const Pairing& pairing, double delta) {
  Eigen::VectorXd u = Eigen::VectorXd::Constant(C.rows(), beta / 4.0);
  for (const auto& [i, j] : pairing.pairs) {
    const auto I = static_cast<Eigen::Index>(i), K = static_cast<Eigen::Index>(j);
    const DimerChi c = chi_dimer_entries(beta, C(I, K), delta);
    u[I] = c.diag + c.off;
    u[K] = c.diag + c.off;
  }
  return u;
}

// N^{-1} [ sum_ij chi_ij - sum_{ijkl, (jk) not in D} chi_ij J_jk chi_kl ].
inline double criticality_residual(double beta, const Eigen::MatrixXd& C, const Pairing& pairing, double delta) {
  const Eigen::VectorXd u = dimer_row_sums(beta, C, pairing, delta);
  double quad = u.dot(C * u);
  for (const auto& [i, j] : pairing.pairs) {
    const auto I = static_cast<Eigen::Index>(i), K = static_cast<Eigen::Index>(j);
    quad -= 2.0 * u[I] * C(I, K) * u[K];
  }
  return (u.sum() - quad) / static_cast<double>(C.rows());
}

struct BracketOptions {
  double lo_factor = 0.01;
  double hi_factor = 100.0;
  int grid_points = 241;
  double rel_tol = 1e-6;
};

// Root of the criticality residual for one realization. The bracket scan runs over a
// geometric grid in units of the realization's own mean-field beta, and the first
// positive-to-nonpositive change is bisected.
inline double solve_beta_c(const Eigen::MatrixXd& C, const Pairing& pairing, double delta,
                           const BracketOptions& opt = {}) {
  const double N = static_cast<double>(C.rows());
  const double tc_mf = C.sum() / (4.0 * N);
  require(tc_mf > 0.0, ErrorKind::bracket_failure, "no couplings: mean-field temperature is zero");
  const double b_lo = opt.lo_factor / tc_mf, b_hi = opt.hi_factor / tc_mf;
  auto F = [&](double b) { return criticality_residual(b, C, pairing, delta); };
  double prev_b = b_lo, prev_f = F(b_lo);
  for (int k = 1; k < opt.grid_points; ++k) {
    const double b = b_lo * std::pow(b_hi / b_lo, static_cast<double>(k) / (opt.grid_points - 1));
    const double fb = F(b);
    if (prev_f > 0.0 && fb <= 0.0) {
      double lo = prev_b, hi = b;
      while (hi - lo > opt.rel_tol * lo) {
        const double mid = 0.5 * (lo + hi);
        if (F(mid) > 0.0)
          lo = mid;
        else
          hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    prev_b = b;
    prev_f = fb;
  }
  std::ostringstream os;
  os << "no sign change of the criticality residual for beta in [" << b_lo << ", " << b_hi << "]";
  throw Error(ErrorKind::bracket_failure, os.str());
}

struct DimerSample {
  Eigen::MatrixXd C;
  Pairing pairing;
};

inline DimerSample prepare_dimer_sample(const Realization& r, Boundary mode, bool pair_spins = true,
                                        double rel_tol = 1e-8) {
  DimerSample s;
  s.C = coupling_matrix(r, mode, rel_tol);
  s.pairing = pair_spins ? match_pairs(r, mode) : no_pairs(r.N());
  return s;
}

struct EnsembleBeta {
  double mean = 0.0;
  double error = 0.0;
  std::vector<double> per_realization;
};

inline EnsembleBeta solve_beta_c_dimer(const std::vector<DimerSample>& samples, double delta, unsigned workers = 1,
                                       std::uint64_t bootstrap_seed = 0, int bootstrap_replicas = 1000,
                                       const BracketOptions& opt = {}) {
  require(!samples.empty(), ErrorKind::insufficient_data, "empty ensemble");
  EnsembleBeta out;
  out.per_realization = parallel_map<double>(samples.size(), workers, [&](std::size_t k) {
    return solve_beta_c(samples[k].C, samples[k].pairing, delta, opt);
  });
  out.mean = mean(out.per_realization);
  if (samples.size() >= 2) {
    out.error = bootstrap_ci(out.per_realization, [](const std::vector<double>& v) { return mean(v); },
                             bootstrap_replicas, bootstrap_seed)
                    .error;
  }
  return out;
}

inline EnsembleBeta solve_beta_c_dimer(const std::vector<Realization>& ensemble, double delta, Boundary mode,
                                       unsigned workers = 1, std::uint64_t bootstrap_seed = 0) {
  std::vector<DimerSample> samples(ensemble.size());
  parallel_for(ensemble.size(), workers, [&](std::size_t k) { samples[k] = prepare_dimer_sample(ensemble[k], mode); });
  return solve_beta_c_dimer(samples, delta, workers, bootstrap_seed);
}

}  // namespace dipsq
