#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace dipsq {

enum class Boundary { open, periodic_images };

inline const char* to_string(Boundary b) {
  return b == Boundary::open ? "open" : "periodic_images";
}

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "open") return Boundary::open;
  if (s == "periodic_images" || s == "periodic") return Boundary::periodic_images;
  throw Error(ErrorKind::invalid_argument, "unknown boundary mode '" + s + "'");
}

struct LatticeSpec {
  int L = 2;
  double a = 1.0;
  double f = 1.0;
  double J = 1.0;
  Boundary boundary = Boundary::open;

  void validate() const {
    require(L >= 2, ErrorKind::invalid_argument, "L must be >= 2");
    require(f > 0.0 && f <= 1.0, ErrorKind::invalid_argument, "filling must lie in (0, 1]");
    require(a > 0.0, ErrorKind::invalid_argument, "lattice constant must be positive");
    require(J > 0.0, ErrorKind::invalid_argument, "coupling scale must be positive");
  }
};

struct Site {
  int x = 0;
  int y = 0;
  friend bool operator==(const Site&, const Site&) = default;
  friend auto operator<=>(const Site&, const Site&) = default;
};

struct Realization {
  LatticeSpec spec;
  std::vector<Site> sites;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::size_t N() const { return sites.size(); }
};

using CouplingMatrix = Eigen::MatrixXd;

// Nearest odd integer to f*L^2. Exact even values are ties and round up unless
// that would exceed the number of sites.
inline long long nearest_odd_count(int L, double f) {
  const long long sites = static_cast<long long>(L) * L;
  const double x = f * static_cast<double>(sites);
  const double nearest_even = 2.0 * std::round(x / 2.0);
  long long n;
  if (std::abs(x - nearest_even) < 1e-9) {
    const long long e = static_cast<long long>(nearest_even);
    n = e + 1 <= sites ? e + 1 : e - 1;
  } else {
    n = 2 * static_cast<long long>(std::round((x - 1.0) / 2.0)) + 1;
  }
  return n;
}

inline Realization dilute(const LatticeSpec& spec, std::uint64_t seed, std::uint64_t stream) {
  spec.validate();
  const long long sites = static_cast<long long>(spec.L) * spec.L;
  const long long n = nearest_odd_count(spec.L, spec.f);
  require(n <= sites, ErrorKind::invalid_filling,
          "nearest odd count " + std::to_string(n) + " exceeds " + std::to_string(sites) + " sites");
  require(n >= 1, ErrorKind::empty_system, "nearest odd count is below 1");

  // Partial Fisher-Yates over site indices.
  std::vector<std::int64_t> idx(static_cast<std::size_t>(sites));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, stream);
  for (long long k = 0; k < n; ++k) {
    const auto j = k + static_cast<long long>(rng.below(static_cast<std::uint64_t>(sites - k)));
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
  }
  Realization r;
  r.spec = spec;
  r.seed = seed;
  r.stream = stream;
  r.sites.reserve(static_cast<std::size_t>(n));
  for (long long k = 0; k < n; ++k) {
    const auto id = idx[static_cast<std::size_t>(k)];
    r.sites.push_back({static_cast<int>(id % spec.L), static_cast<int>(id / spec.L)});
  }
  std::sort(r.sites.begin(), r.sites.end());
  return r;
}

namespace detail {

// Integral of r^{-k} over the plane outside the square [-s, s]^2 (k > 2).
inline double exterior_square_integral(double k, double s) {
  // 8 * int_0^{pi/4} cos(t)^{k-2} dt by composite Simpson; the integrand is smooth.
  const int m = 2000;
  const double h = (M_PI / 4.0) / m;
  double acc = 0.0;
  for (int i = 0; i <= m; ++i) {
    const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::pow(std::cos(i * h), k - 2.0);
  }
  const double angular = 8.0 * acc * h / 3.0;
  return angular * std::pow(s, 2.0 - k) / (k - 2.0);
}

// Sum of |n|^{-k} over integer vectors with max(|n_x|,|n_y|) <= m, excluding 0.
inline double square_power_sum(double k, int m) {
  double acc = 0.0;
  for (int x = 1; x <= m; ++x) {
    // axis terms: (±x, 0) and (0, ±x)
    acc += 4.0 * std::pow(static_cast<double>(x), -k);
    for (int y = 1; y <= m; ++y) {
      const double r2 = static_cast<double>(x) * x + static_cast<double>(y) * y;
      acc += 4.0 * std::pow(r2, -k / 2.0);
    }
  }
  return acc;
}

// Sum of |n|^{-k} over all nonzero n in Z^2. The exterior of a finite square is
// replaced by its integral plus the midpoint-rule Laplacian correction, which
// leaves an O(m^{-k-2}) error.
inline double power_sum(double k, int m) {
  const double s = m + 0.5;
  return square_power_sum(k, m) + exterior_square_integral(k, s) +
         k * k / 24.0 * exterior_square_integral(k + 2.0, s);
}

}  // namespace detail

// 4 * sum_{n>=1, m>=0} (n^2+m^2)^{-3p/2}, i.e. the full-plane sum of r^{-3p} in units a=1.
inline double lattice_sum(int p, double rel_tol = 1e-10) {
  require(p >= 1 && p <= 3, ErrorKind::invalid_argument, "lattice_sum expects p in {1,2,3}");
  require(rel_tol > 0.0, ErrorKind::invalid_argument, "rel_tol must be positive");
  const double k = 3.0 * p;
  int m = 16;
  double prev = detail::power_sum(k, m);
  for (;;) {
    m *= 2;
    const double cur = detail::power_sum(k, m);
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur) / 10.0 || m > 4096) return cur;
    prev = cur;
  }
}

// Periodic-image kernel for one cell size L (in units of a). Each entry is the direct
// sum over images inside |n|_inf <= n0 plus the exterior remainder expanded to second
// order in the displacement:
//   sum_ext |Ln + d|^{-3} = L^{-3} K3 + (9/4) |d|^2 L^{-5} K5 + O(d^4),
// where K3 and K5 are exterior lattice sums. The full L x L table is built eagerly so a
// kernel can be shared read-only across realizations and threads.
class PeriodicKernel {
 public:
  PeriodicKernel(int L, double rel_tol) : L_(L) {
    require(L >= 2, ErrorKind::invalid_argument, "L must be >= 2");
    // The quartic remainder is at most ~ (945/24) |d|^4 L^{-7} K7 with |d| <= L/sqrt(2),
    // while every entry exceeds ~ 9 L^{-3}.
    n0_ = 2;
    for (;;) {
      const double k7 = detail::exterior_square_integral(7.0, n0_ + 0.5);
      if ((945.0 / 24.0) * 0.25 * k7 / 9.0 < rel_tol / 10.0) break;
      ++n0_;
    }
    k3_ = detail::power_sum(3.0, 1024) - detail::square_power_sum(3.0, n0_);
    k5_ = detail::power_sum(5.0, 256) - detail::square_power_sum(5.0, n0_);
    table_.resize(static_cast<std::size_t>(L) * L);
    for (int dy = 0; dy < L; ++dy)
      for (int dx = 0; dx < L; ++dx) table_[static_cast<std::size_t>(dy) * L + dx] = evaluate(dx, dy);
  }

  // Sum over all images of |d + L n|^{-3} for an integer displacement d.
  double operator()(int dx, int dy) const {
    // Reflections leave the image sum unchanged; folding onto one representative makes
    // K(d) and K(-d) bitwise identical.
    dx = ((dx % L_) + L_) % L_;
    dy = ((dy % L_) + L_) % L_;
    dx = std::min(dx, L_ - dx);
    dy = std::min(dy, L_ - dy);
    return table_[static_cast<std::size_t>(dy) * L_ + dx];
  }

  int L() const { return L_; }
  int n0() const { return n0_; }

 private:
  double evaluate(int dx, int dy) const {
    // Minimum image keeps the Taylor remainder small.
    if (2 * dx > L_) dx -= L_;
    if (2 * dy > L_) dy -= L_;
    const double Ld = L_;
    double acc = 0.0;
    for (int nx = -n0_; nx <= n0_; ++nx) {
      const double px = dx + Ld * nx;
      for (int ny = -n0_; ny <= n0_; ++ny) {
        const double py = dy + Ld * ny;
        const double r2 = px * px + py * py;
        if (r2 == 0.0) continue;
        acc += 1.0 / (r2 * std::sqrt(r2));
      }
    }
    const double d2 = static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
    return acc + k3_ / (Ld * Ld * Ld) + 2.25 * d2 * k5_ / std::pow(Ld, 5);
  }

  int L_;
  int n0_ = 2;
  double k3_ = 0.0;
  double k5_ = 0.0;
  std::vector<double> table_;
};

// Image sum by brute force up to |n|_inf <= n_max, followed by the continuum tail.
// Slow; meant as a reference for small numbers of entries.
inline double image_sum_bruteforce(int L, int dx, int dy, int n_max) {
  double acc = 0.0;
  for (int nx = -n_max; nx <= n_max; ++nx)
    for (int ny = -n_max; ny <= n_max; ++ny) {
      const double px = dx + static_cast<double>(L) * nx;
      const double py = dy + static_cast<double>(L) * ny;
      const double r2 = px * px + py * py;
      if (r2 == 0.0) continue;
      acc += 1.0 / (r2 * std::sqrt(r2));
    }
  // Tail in image-index units: the continuum integral plus its Laplacian correction.
  const double sigma = n_max + 0.5;
  const double Ld = L;
  const double d2 = static_cast<double>(dx) * dx + static_cast<double>(dy) * dy;
  return acc + (detail::exterior_square_integral(3.0, sigma) +
                (9.0 / 24.0 + 2.25 * d2 / (Ld * Ld)) * detail::exterior_square_integral(5.0, sigma)) /
                   (Ld * Ld * Ld);
}

inline CouplingMatrix coupling_matrix(const Realization& r, const PeriodicKernel& kernel) {
  r.spec.validate();
  require(kernel.L() == r.spec.L, ErrorKind::invalid_argument, "kernel cell size does not match the lattice");
  const std::size_t n = r.N();
  const double scale = r.spec.J / std::pow(r.spec.a, 3);
  CouplingMatrix C = CouplingMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const int dx = r.sites[j].x - r.sites[i].x;
      const int dy = r.sites[j].y - r.sites[i].y;
      require(dx != 0 || dy != 0, ErrorKind::degenerate_geometry, "coincident sites");
      const double v = scale * kernel(dx, dy);
      C(i, j) = v;
      C(j, i) = v;
    }
  return C;
}

inline CouplingMatrix coupling_matrix(const Realization& r, Boundary mode, double rel_tol = 1e-8) {
  r.spec.validate();
  require(rel_tol > 0.0 && rel_tol <= 1e-3, ErrorKind::invalid_argument, "rel_tol must lie in (0, 1e-3]");
  if (mode == Boundary::periodic_images) return coupling_matrix(r, PeriodicKernel(r.spec.L, rel_tol));
  const std::size_t n = r.N();
  const double scale = r.spec.J / std::pow(r.spec.a, 3);
  CouplingMatrix C = CouplingMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = r.sites[j].x - r.sites[i].x;
      const double dy = r.sites[j].y - r.sites[i].y;
      const double r2 = dx * dx + dy * dy;
      require(r2 > 0.0, ErrorKind::degenerate_geometry, "coincident sites");
      const double v = scale / (r2 * std::sqrt(r2));
      C(i, j) = v;
      C(j, i) = v;
    }
  return C;
}

inline CouplingMatrix coupling_matrix(const Realization& r, double rel_tol = 1e-8) {
  return coupling_matrix(r, r.spec.boundary, rel_tol);
}

// L^{-2} tr(C^3) for an arbitrary zero-diagonal coupling matrix.
inline double triangle_sum_matrix(const CouplingMatrix& C, int L) {
  const Eigen::MatrixXd C2 = C * C;
  return C2.cwiseProduct(C).sum() / (static_cast<double>(L) * L);
}

// L^{-2} sum over distinct i, j, k of J_ij J_jk J_ki on a fully occupied open L x L
// lattice (a = J = 1). Enumerates displacement pairs (u, v) with the number of
// placements of the triangle as a product of per-axis counts.
inline double triangle_sum_direct(int L) {
  require(L >= 2, ErrorKind::invalid_argument, "L must be >= 2");
  const int R = L - 1;
  const int W = 2 * R + 1;
  std::vector<double> kern(static_cast<std::size_t>(W) * W, 0.0);
  for (int x = -R; x <= R; ++x)
    for (int y = -R; y <= R; ++y) {
      if (x == 0 && y == 0) continue;
      const double r2 = static_cast<double>(x) * x + static_cast<double>(y) * y;
      kern[static_cast<std::size_t>(y + R) * W + (x + R)] = 1.0 / (r2 * std::sqrt(r2));
    }
  auto K = [&](int x, int y) -> double {
    if (x < -R || x > R || y < -R || y > R) return 0.0;
    return kern[static_cast<std::size_t>(y + R) * W + (x + R)];
  };
  auto span_count = [L](int u, int w) {
    const int hi = std::max({0, u, w});
    const int lo = std::min({0, u, w});
    return std::max(0, L - (hi - lo));
  };
  double acc = 0.0;
  for (int ux = -R; ux <= R; ++ux)
    for (int vx = -R; vx <= R; ++vx) {
      const int cx = span_count(ux, ux + vx);
      if (cx == 0) continue;
      for (int uy = -R; uy <= R; ++uy) {
        if (ux == 0 && uy == 0) continue;
        for (int vy = -R; vy <= R; ++vy) {
          if (vx == 0 && vy == 0) continue;
          const int wx = ux + vx, wy = uy + vy;
          if (wx == 0 && wy == 0) continue;
          const int cy = span_count(uy, wy);
          if (cy == 0) continue;
          acc += static_cast<double>(cx) * cy * K(ux, uy) * K(vx, vy) * K(wx, wy);
        }
      }
    }
  return acc / (static_cast<double>(L) * L);
}

struct TriangleSumResult {
  std::vector<int> sizes;
  std::vector<double> values;
  double intercept = 0.0;
  double slope = 0.0;
};

inline TriangleSumResult triangle_sum(const std::vector<int>& sizes) {
  require(sizes.size() >= 2, ErrorKind::insufficient_data, "triangle_sum needs at least two sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    require(sizes[i] >= 8, ErrorKind::invalid_argument, "triangle_sum sizes must be >= 8");
    if (i > 0)
      require(sizes[i] > sizes[i - 1], ErrorKind::invalid_argument, "triangle_sum sizes must increase");
  }
  TriangleSumResult out;
  out.sizes = sizes;
  std::vector<std::pair<double, double>> pts;
  for (int L : sizes) {
    const double v = triangle_sum_direct(L);
    out.values.push_back(v);
    pts.emplace_back(static_cast<double>(L), v);
  }
  const auto fit = linear_extrapolate_inverseL(pts);
  out.intercept = fit.intercept;
  out.slope = fit.slope;
  return out;
}

}  // namespace dipsq
