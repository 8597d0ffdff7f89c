#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "error.hpp"
#include "localfields.hpp"
#include "meanfield.hpp"

namespace dipsq {

// Dense spin-1/2 operators on 2^N states. Bit i of the basis index is spin i,
// with bit value 1 meaning s^z = +1/2.
namespace ed {

inline constexpr int max_spins = 14;

inline Eigen::Index dim(int n) { return Eigen::Index{1} << n; }

inline void check_capacity(Eigen::Index n, int limit) {
  require(n >= 1 && n <= limit, ErrorKind::capacity,
          "dense diagonalization supports up to " + std::to_string(limit) + " spins, got " + std::to_string(n));
}

inline double sz_of(std::uint64_t state, int i) { return ((state >> i) & 1u) ? 0.5 : -0.5; }

// H = -sum_{i<j} J_ij (sx sx + sy sy + Delta sz sz) - h sum_i sx_i.
inline Eigen::MatrixXd hamiltonian(const Eigen::MatrixXd& C, double delta, double h = 0.0) {
  const int n = static_cast<int>(C.rows());
  check_capacity(n, max_spins);
  const Eigen::Index D = dim(n);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
  for (Eigen::Index s = 0; s < D; ++s) {
    const auto st = static_cast<std::uint64_t>(s);
    double diag = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double J = C(i, j);
        if (J == 0.0) continue;
        diag -= J * delta * sz_of(st, i) * sz_of(st, j);
        if (((st >> i) & 1u) != ((st >> j) & 1u)) {
          // (S+S- + S-S+)/2 flips an antiparallel pair with amplitude 1/2.
          const auto t = static_cast<Eigen::Index>(st ^ ((1ull << i) | (1ull << j)));
          H(t, s) -= 0.5 * J;
        }
      }
    H(s, s) += diag;
    if (h != 0.0)
      for (int i = 0; i < n; ++i) H(static_cast<Eigen::Index>(st ^ (1ull << i)), s) -= 0.5 * h;
  }
  return H;
}

inline Eigen::MatrixXd sx_site(int n, int i) {
  const Eigen::Index D = dim(n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(D, D);
  for (Eigen::Index s = 0; s < D; ++s) A(static_cast<Eigen::Index>(static_cast<std::uint64_t>(s) ^ (1ull << i)), s) = 0.5;
  return A;
}

inline Eigen::MatrixXd sx_total(int n) {
  const Eigen::Index D = dim(n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(D, D);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index s = 0; s < D; ++s) A(static_cast<Eigen::Index>(static_cast<std::uint64_t>(s) ^ (1ull << i)), s) += 0.5;
  return A;
}

// sum_{ij} (sx_i sx_j + sy_i sy_j): N/2 on the diagonal plus unit flip-flop terms.
inline Eigen::MatrixXd mxy_operator(int n) {
  const Eigen::Index D = dim(n);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(D, D) * (0.5 * n);
  for (Eigen::Index s = 0; s < D; ++s) {
    const auto st = static_cast<std::uint64_t>(s);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (((st >> i) & 1u) != ((st >> j) & 1u))
          M(static_cast<Eigen::Index>(st ^ ((1ull << i) | (1ull << j))), s) += 1.0;
  }
  return M;
}

}  // namespace ed

enum class MxyNorm { per_spin, per_spin_squared };

inline double mxy_scale(MxyNorm norm, double n) { return norm == MxyNorm::per_spin ? 1.0 / n : 1.0 / (n * n); }

struct ThermalObservables {
  double energy_per_spin = 0.0;
  double mxy2 = 0.0;
  double sx = 0.0;
  double log_z = 0.0;
};

inline ThermalObservables thermal_observables(const Eigen::MatrixXd& C, double delta, double h, double beta,
                                              MxyNorm norm = MxyNorm::per_spin_squared) {
  const int n = static_cast<int>(C.rows());
  ed::check_capacity(n, ed::max_spins);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ed::hamiltonian(C, delta, h));
  const Eigen::VectorXd& E = es.eigenvalues();
  const double e0 = E.minCoeff();
  Eigen::VectorXd w = (-beta * (E.array() - e0)).exp();
  const double Z = w.sum();
  w /= Z;
  const Eigen::MatrixXd& V = es.eigenvectors();
  auto thermal = [&](const Eigen::MatrixXd& op) {
    const Eigen::MatrixXd opV = op * V;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < E.size(); ++k) acc += w[k] * V.col(k).dot(opV.col(k));
    return acc;
  };
  ThermalObservables out;
  out.energy_per_spin = w.dot(E) / n;
  out.mxy2 = thermal(ed::mxy_operator(n)) * mxy_scale(norm, n);
  out.sx = thermal(ed::sx_total(n));
  out.log_z = std::log(Z) - beta * e0;
  return out;
}

// chi_ij = int_0^beta <sx_i(0) sx_j(tau)> dtau in the spectral representation.
inline double kubo_susceptibility(const Eigen::MatrixXd& C, double delta, double beta, int i, int j) {
  const int n = static_cast<int>(C.rows());
  ed::check_capacity(n, 12);
  require(i >= 0 && i < n && j >= 0 && j < n, ErrorKind::invalid_argument, "site index out of range");
  const Eigen::MatrixXd H = ed::hamiltonian(C, delta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const Eigen::VectorXd& E = es.eigenvalues();
  const Eigen::MatrixXd& V = es.eigenvectors();
  const Eigen::MatrixXd A = V.transpose() * ed::sx_site(n, i) * V;
  const Eigen::MatrixXd B = V.transpose() * ed::sx_site(n, j) * V;
  const double e0 = E.minCoeff();
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  double Z = 0.0, acc = 0.0;
  for (Eigen::Index m = 0; m < E.size(); ++m) {
    const double wm = std::exp(-beta * (E[m] - e0));
    Z += wm;
    for (Eigen::Index k = 0; k < E.size(); ++k) {
      const double amp = A(m, k) * B(k, m);
      if (amp == 0.0) continue;
      const double gap = E[k] - E[m];
      if (std::abs(gap) < 1e-12 * scale) {
        acc += amp * beta * wm;
      } else {
        const double wk = std::exp(-beta * (E[k] - e0));
        acc += amp * (wm - wk) / gap;
      }
    }
  }
  return acc / Z;
}

// D^{-1} Tr of the uniform average over all distinct orderings of n copies of H and
// m copies of S^x (H at zero field). Equivalent to the beta-stripped A_{n,m}.
inline double moment_bruteforce(const Eigen::MatrixXd& C, double delta, int n, int m) {
  require(n >= 0 && m >= 0 && n + m <= 5, ErrorKind::invalid_argument, "moment order n+m must be <= 5");
  const int N = static_cast<int>(C.rows());
  ed::check_capacity(N, 8);
  const Eigen::Index D = ed::dim(N);
  if (n + m == 0) return 1.0;
  const Eigen::MatrixXd H = ed::hamiltonian(C, delta);
  const Eigen::MatrixXd X = ed::sx_total(N);
  std::vector<int> word(static_cast<std::size_t>(n), 0);
  word.insert(word.end(), static_cast<std::size_t>(m), 1);
  std::sort(word.begin(), word.end());
  double acc = 0.0;
  long count = 0;
  do {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(D, D);
    for (int op : word) P = P * (op == 0 ? H : X);
    acc += P.trace();
    ++count;
  } while (std::next_permutation(word.begin(), word.end()));
  return acc / (static_cast<double>(count) * static_cast<double>(D));
}

// B coefficients assembled from brute-force moments (per spin).
inline BCoefficients b_from_moments(const Eigen::MatrixXd& C, double delta) {
  const double N = static_cast<double>(C.rows());
  auto A = [&](int n, int m) { return moment_bruteforce(C, delta, n, m); };
  const double A02 = A(0, 2), A12 = A(1, 2), A20 = A(2, 0), A22 = A(2, 2), A30 = A(3, 0), A32 = A(3, 2);
  BCoefficients b;
  b.B0 = A02 / N;
  b.B1 = A12 / N;
  b.B2 = (A22 - A20 * A02) / N;
  b.B3 = (A32 - A30 * A02 - 3.0 * A20 * A12) / N;
  return b;
}

struct QuenchPoint {
  double t = 0.0;
  double xi2 = 0.0;
  double mxy2 = 0.0;
  double sx = 0.0;
  double energy = 0.0;
  bool squeezing_defined = true;
};

// Squeezing parameter from the collective moments: N * min eigenvalue of the
// symmetrized (y, z) covariance over <S^x>^2.
inline double xi2_from_moments(double n, double sx, double vyy, double vzz, double cyz) {
  const double tr = vyy + vzz;
  const double det = vyy * vzz - cyz * cyz;
  const double lam = 0.5 * tr - std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return n * lam / (sx * sx);
}

// Exact evolution of the x-polarized product state of the non-shelved spins.
inline std::vector<QuenchPoint> quench_dynamics(const Eigen::MatrixXd& C_full, double delta,
                                                const std::vector<double>& times,
                                                const std::vector<std::size_t>& shelved = {},
                                                MxyNorm norm = MxyNorm::per_spin_squared) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < static_cast<std::size_t>(C_full.rows()); ++i)
    if (std::find(shelved.begin(), shelved.end(), i) == shelved.end()) keep.push_back(i);
  require(!keep.empty(), ErrorKind::all_shelved, "no spins left after shelving");
  const Eigen::MatrixXd C = restrict_couplings(C_full, keep);
  const int n = static_cast<int>(C.rows());
  ed::check_capacity(n, 12);
  const Eigen::Index D = ed::dim(n);
  const Eigen::MatrixXd H = ed::hamiltonian(C, delta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const Eigen::VectorXd& E = es.eigenvalues();
  const Eigen::MatrixXd& V = es.eigenvectors();
  const Eigen::VectorXd psi0 = Eigen::VectorXd::Constant(D, std::pow(2.0, -0.5 * n));
  const Eigen::VectorXd c0 = V.transpose() * psi0;
  using cd = std::complex<double>;

  std::vector<QuenchPoint> out;
  for (double t : times) {
    Eigen::VectorXcd ct(D);
    for (Eigen::Index k = 0; k < D; ++k) ct[k] = c0[k] * std::exp(cd(0.0, -E[k] * t));
    const Eigen::VectorXcd psi = V.cast<cd>() * ct;

    // Collective operators applied bitwise.
    Eigen::VectorXcd xp = Eigen::VectorXcd::Zero(D), yp = Eigen::VectorXcd::Zero(D), zp = Eigen::VectorXcd::Zero(D);
    for (Eigen::Index s = 0; s < D; ++s) {
      const auto st = static_cast<std::uint64_t>(s);
      double z = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto tgt = static_cast<Eigen::Index>(st ^ (1ull << i));
        const bool up = (st >> i) & 1u;
        xp[tgt] += 0.5 * psi[s];
        // sy|down> = (i/2)|up>, sy|up> = (-i/2)|down>
        yp[tgt] += (up ? cd(0.0, -0.5) : cd(0.0, 0.5)) * psi[s];
        z += up ? 0.5 : -0.5;
      }
      zp[s] = z * psi[s];
    }
    const double ex = psi.dot(xp).real();
    const double ey = psi.dot(yp).real();
    const double ez = psi.dot(zp).real();
    const double exx = xp.squaredNorm();
    const double eyy = yp.squaredNorm();
    const double ezz = zp.squaredNorm();
    const double eyz = yp.dot(zp).real();  // Re <Sy Sz> is the symmetrized moment
    QuenchPoint q;
    q.t = t;
    q.sx = ex;
    q.mxy2 = (exx + eyy) * mxy_scale(norm, n);
    q.energy = psi.dot(H.cast<cd>() * psi).real();
    if (std::abs(ex) < 1e-14) {
      q.squeezing_defined = false;
      q.xi2 = std::numeric_limits<double>::quiet_NaN();
    } else {
      q.xi2 = xi2_from_moments(n, ex, eyy - ey * ey, ezz - ez * ez, eyz - ey * ez);
    }
    out.push_back(q);
  }
  return out;
}

}  // namespace dipsq
