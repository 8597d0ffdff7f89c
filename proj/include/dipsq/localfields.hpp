#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "lattice.hpp"

namespace dipsq {

inline constexpr double euler_gamma = 0.57721566490153286061;

inline Eigen::VectorXd local_fields(const CouplingMatrix& C) {
  Eigen::VectorXd Ji = C.rowwise().sum() - C.diagonal();
  return Ji;
}

// Row sums of the coupling matrix without storing it; O(N^2) time, O(N) memory.
inline Eigen::VectorXd local_fields(const Realization& r, Boundary mode, double rel_tol = 1e-8) {
  r.spec.validate();
  const std::size_t n = r.N();
  const double scale = r.spec.J / std::pow(r.spec.a, 3);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::optional<PeriodicKernel> kernel;
  if (mode == Boundary::periodic_images) kernel.emplace(r.spec.L, rel_tol);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const int dx = r.sites[j].x - r.sites[i].x, dy = r.sites[j].y - r.sites[i].y;
      double v;
      if (kernel) {
        v = (*kernel)(dx, dy);
      } else {
        const double r2 = static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
        v = 1.0 / (r2 * std::sqrt(r2));
      }
      out[static_cast<Eigen::Index>(i)] += scale * v;
      out[static_cast<Eigen::Index>(j)] += scale * v;
    }
  return out;
}

inline double spin_density(double f, double a) { return f / (a * a); }

inline double nn_distance_pdf(double r, double f, double a) {
  require(r >= a, ErrorKind::domain, "nearest-neighbour distance below the lattice constant");
  const double rho = spin_density(f, a);
  return 2.0 * M_PI * r * rho * std::exp(-rho * (M_PI * r * r - M_PI * a * a));
}

inline double nn_distance_cdf(double r, double f, double a) {
  if (r <= a) return 0.0;
  const double rho = spin_density(f, a);
  return 1.0 - std::exp(-rho * M_PI * (r * r - a * a));
}

// Local-field density implied by J_i = 2 pi rho J / r_nn. Fields above 2 pi rho J / a
// would need r_nn < a and carry no weight.
inline double field_pdf(double Ji, double f, double a, double J) {
  require(Ji > 0.0, ErrorKind::domain, "local field must be positive");
  const double rho = spin_density(f, a);
  if (Ji > 2.0 * M_PI * rho * J / a) return 0.0;
  const double c = 2.0 * M_PI * rho * J;
  return (8.0 * std::pow(M_PI, 3) * std::pow(rho, 3) * J * J / std::pow(Ji, 3)) *
         std::exp(-rho * (M_PI * c * c / (Ji * Ji) - M_PI * a * a));
}

inline double field_cdf(double Ji, double f, double a, double J) {
  if (Ji <= 0.0) return 0.0;
  const double rho = spin_density(f, a);
  const double r = 2.0 * M_PI * rho * J / Ji;
  return 1.0 - nn_distance_cdf(r, f, a);
}

// Stationary point of field_pdf: d/dx [x^{-3} exp(-pi rho c^2 / x^2)] = 0 with c = 2 pi rho J.
inline double field_pdf_mode(double f, double a, double J) {
  const double rho = spin_density(f, a);
  const double c = 2.0 * M_PI * rho * J;
  return c * std::sqrt(2.0 * M_PI * rho / 3.0);
}

inline double r_typ(double f, double a = 1.0) {
  require(f > 0.0 && f <= 1.0, ErrorKind::invalid_argument, "filling must lie in (0, 1]");
  return std::exp(-euler_gamma / 2.0) * a / std::sqrt(M_PI * f);
}

struct Motif {
  std::string label;
  double threshold = 0.0;
};

inline std::array<Motif, 5> motif_table() {
  const double d = std::pow(2.0, -1.5);
  return {{{"One diagonal neighbor", d},
           {"Two diagonal neighbors", 2.0 * d},
           {"One horizontal/vertical neighbor", 1.0},
           {"One horizontal/vertical and one diagonal neighbor", 1.0 + d},
           {"Two horizontal/vertical neighbors", 2.0}}};
}

struct ShelveResult {
  std::vector<std::size_t> kept;
  double fraction = 0.0;
};

// One-pass threshold on the full-system fields; fields are not recomputed after removal.
inline ShelveResult shelve(const CouplingMatrix& C, double J0) {
  require(J0 > 0.0, ErrorKind::invalid_argument, "shelving cutoff must be positive");
  const Eigen::VectorXd Ji = local_fields(C);
  ShelveResult out;
  for (Eigen::Index i = 0; i < Ji.size(); ++i)
    if (Ji[i] <= J0) out.kept.push_back(static_cast<std::size_t>(i));
  require(!out.kept.empty(), ErrorKind::all_shelved, "every spin exceeds the cutoff");
  out.fraction = 1.0 - static_cast<double>(out.kept.size()) / static_cast<double>(Ji.size());
  return out;
}

inline ShelveResult shelve(const Realization&, const CouplingMatrix& C, double J0) { return shelve(C, J0); }

inline CouplingMatrix restrict_couplings(const CouplingMatrix& C, const std::vector<std::size_t>& keep) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  CouplingMatrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = C(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)]));
  return out;
}

inline Realization restrict_realization(const Realization& r, const std::vector<std::size_t>& keep) {
  Realization out = r;
  out.sites.clear();
  for (auto i : keep) out.sites.push_back(r.sites[i]);
  return out;
}

// First realization stream, from `start` on, whose shelved fraction at J0 lies in [lo, hi].
inline std::uint64_t stream_with_shelved_fraction(const LatticeSpec& spec, std::uint64_t seed, double J0, double lo,
                                                  double hi, std::uint64_t start = 0, std::uint64_t tries = 200) {
  spec.validate();
  const bool periodic = spec.boundary == Boundary::periodic_images;
  std::optional<PeriodicKernel> kernel;
  if (periodic) kernel.emplace(spec.L, 1e-8);
  for (std::uint64_t s = start; s < start + tries; ++s) {
    const Realization r = dilute(spec, seed, s);
    const CouplingMatrix C = periodic ? coupling_matrix(r, *kernel) : coupling_matrix(r, Boundary::open);
    const double frac = shelve(C, J0).fraction;
    if (frac >= lo && frac <= hi) return s;
  }
  throw Error(ErrorKind::insufficient_data, "no realization with the requested shelved fraction");
}

// Nearest-neighbour distance of every spin (units of a), using the minimum image on
// the L-torus when periodic is true. Searches square shells on an occupancy grid.
inline std::vector<double> nearest_neighbor_distances(const Realization& r, bool periodic) {
  const int L = r.spec.L;
  require(r.N() >= 2, ErrorKind::insufficient_data, "need at least two spins");
  std::vector<int> occ(static_cast<std::size_t>(L) * L, 0);
  for (const auto& s : r.sites) occ[static_cast<std::size_t>(s.y) * L + s.x] = 1;
  std::vector<double> out;
  out.reserve(r.N());
  for (const auto& s : r.sites) {
    double best2 = std::numeric_limits<double>::infinity();
    for (int shell = 1; shell < L; ++shell) {
      // Any site in a later shell is at least `shell` away.
      if (static_cast<double>(shell) * shell > best2) break;
      for (int dy = -shell; dy <= shell; ++dy)
        for (int dx = -shell; dx <= shell; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != shell) continue;
          int x = s.x + dx, y = s.y + dy;
          if (periodic) {
            if (2 * shell > L) continue;  // would double count wrapped images
            x = ((x % L) + L) % L;
            y = ((y % L) + L) % L;
          } else if (x < 0 || y < 0 || x >= L || y >= L) {
            continue;
          }
          if (occ[static_cast<std::size_t>(y) * L + x]) {
            const double d2 = static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
            best2 = std::min(best2, d2);
          }
        }
    }
    require(std::isfinite(best2), ErrorKind::insufficient_data, "no neighbour found within the search window");
    out.push_back(std::sqrt(best2) * r.spec.a);
  }
  return out;
}

struct FieldHistogram {
  std::vector<double> edges;
  std::vector<double> counts;
  std::size_t n_samples = 0;
};

// Logarithmic bins over [min/2, 2 max]. With density=true, sum(counts * widths) = 1
// for the samples that fall inside the range (all of them, by construction).
inline FieldHistogram field_histogram(const std::vector<double>& values, int bins = 200, bool density = true) {
  require(!values.empty(), ErrorKind::insufficient_data, "histogram of empty sample");
  require(bins >= 1, ErrorKind::invalid_argument, "need at least one bin");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  require(*mn > 0.0, ErrorKind::domain, "log bins need positive values");
  const double lo = std::log(*mn / 2.0), hi = std::log(*mx * 2.0);
  FieldHistogram h;
  h.n_samples = values.size();
  for (int b = 0; b <= bins; ++b) h.edges.push_back(std::exp(lo + (hi - lo) * b / bins));
  h.counts.assign(static_cast<std::size_t>(bins), 0.0);
  for (double v : values) {
    auto k = static_cast<int>((std::log(v) - lo) / (hi - lo) * bins);
    k = std::clamp(k, 0, bins - 1);
    h.counts[static_cast<std::size_t>(k)] += 1.0;
  }
  if (density)
    for (std::size_t k = 0; k < h.counts.size(); ++k)
      h.counts[k] /= static_cast<double>(values.size()) * (h.edges[k + 1] - h.edges[k]);
  return h;
}

}  // namespace dipsq
