#include <gtest/gtest.h>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <complex>

#include "dipsq/ed.hpp"
#include "dipsq/rng.hpp"

using namespace dipsq;
using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;

namespace {

// Reference operators from explicit Kronecker products, with site i at bit i
// (site 0 is the rightmost factor).
CMat site_op(int n, int i, const Eigen::Matrix2cd& op) {
  CMat out = CMat::Identity(1, 1);
  for (int k = n - 1; k >= 0; --k) {
    const CMat f = k == i ? CMat(op) : CMat(CMat::Identity(2, 2));
    out = Eigen::kroneckerProduct(out, f).eval();
  }
  return out;
}

Eigen::Matrix2cd spin(int a) {
  Eigen::Matrix2cd m;
  if (a == 0) m << 0, 0.5, 0.5, 0;
  if (a == 1) m << 0, cd(0, -0.5), cd(0, 0.5), 0;
  if (a == 2) m << -0.5, 0, 0, 0.5;  // bit 1 = up
  return m;
}

CMat ref_hamiltonian(const Eigen::MatrixXd& C, double delta, double h) {
  const int n = static_cast<int>(C.rows());
  const auto D = Eigen::Index{1} << n;
  CMat H = CMat::Zero(D, D);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double g[3] = {1.0, 1.0, delta};
      for (int a = 0; a < 3; ++a) H -= C(i, j) * g[a] * site_op(n, i, spin(a)) * site_op(n, j, spin(a));
    }
    H -= h * site_op(n, i, spin(0));
  }
  return H;
}

Eigen::MatrixXd random_couplings(int n, Rng& rng) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) C(i, j) = C(j, i) = 0.1 + rng.uniform();
  return C;
}

Eigen::MatrixXd pair(double J) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2, 2);
  C(0, 1) = C(1, 0) = J;
  return C;
}

}  // namespace

TEST(Hamiltonian, MatchesKroneckerConstruction) {
  Rng rng(1, 1);
  for (int n : {2, 3, 5}) {
    const auto C = random_couplings(n, rng);
    const auto H = ed::hamiltonian(C, 0.37, 0.21);
    EXPECT_LT((H.cast<cd>() - ref_hamiltonian(C, 0.37, 0.21)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Hamiltonian, HermitianAndConservesSzAtZeroField) {
  Rng rng(2, 2);
  const int n = 6;
  const auto C = random_couplings(n, rng);
  const auto H = ed::hamiltonian(C, -1.3);
  EXPECT_LT((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-13);
  CMat Sz = CMat::Zero(H.rows(), H.cols());
  for (int i = 0; i < n; ++i) Sz += site_op(n, i, spin(2));
  const CMat Hc = H.cast<cd>();
  EXPECT_LT((Hc * Sz - Sz * Hc).cwiseAbs().maxCoeff(), 1e-13);
  const auto M = ed::mxy_operator(n);
  EXPECT_LT((M - M.transpose()).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(ed::hamiltonian(Eigen::MatrixXd::Zero(15, 15), 0.0), Error);
}

TEST(Hamiltonian, TwoSpinSpectrum) {
  for (double delta : {0.0, 0.4, -2.0}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ed::hamiltonian(pair(1.0), delta));
    std::vector<double> expect{-(2.0 - delta) / 4, -delta / 4, -delta / 4, (2.0 + delta) / 4};
    std::sort(expect.begin(), expect.end());
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(es.eigenvalues()[k], expect[k], 1e-14);
    // Gap between the m = +-1 triplets and the m = 0 triplet.
    EXPECT_NEAR(-delta / 4 + (2.0 - delta) / 4, (1.0 - delta) / 2, 1e-15);
  }
}

TEST(Thermal, InfiniteTemperatureLimits) {
  Rng rng(3, 3);
  const int n = 5;
  const auto C = random_couplings(n, rng);
  const auto o = thermal_observables(C, 0.5, 0.0, 0.0);
  EXPECT_NEAR(o.energy_per_spin, 0.0, 1e-14);
  EXPECT_NEAR(o.mxy2, 0.5 * n / (n * n), 1e-14);
  EXPECT_NEAR(thermal_observables(C, 0.5, 0.0, 0.0, MxyNorm::per_spin).mxy2, 0.5, 1e-14);
  EXPECT_NEAR(o.log_z, n * std::log(2.0), 1e-12);
  EXPECT_NEAR(o.sx, 0.0, 1e-14);
}

TEST(Thermal, EnergyNonIncreasingInBeta) {
  Rng rng(4, 4);
  const auto C = random_couplings(6, rng);
  double prev = 1e300;
  for (double b = 0.0; b < 20.0; b += 0.25) {
    const double e = thermal_observables(C, -0.7, 0.3, b).energy_per_spin;
    EXPECT_LE(e, prev + 1e-13);
    prev = e;
  }
}

TEST(Thermal, MatchesDirectTraceFormula) {
  Rng rng(5, 5);
  const int n = 4;
  const auto C = random_couplings(n, rng);
  const double beta = 1.3, delta = 0.2, h = 0.4;
  const CMat H = ref_hamiltonian(C, delta, h);
  const CMat rho = (-beta * H).exp();
  const double Z = rho.trace().real();
  CMat Sx = CMat::Zero(H.rows(), H.cols()), Sy = Sx;
  for (int i = 0; i < n; ++i) {
    Sx += site_op(n, i, spin(0));
    Sy += site_op(n, i, spin(1));
  }
  const auto o = thermal_observables(C, delta, h, beta);
  EXPECT_NEAR(o.energy_per_spin, (rho * H).trace().real() / Z / n, 1e-12);
  EXPECT_NEAR(o.sx, (rho * Sx).trace().real() / Z, 1e-12);
  EXPECT_NEAR(o.mxy2, (rho * (Sx * Sx + Sy * Sy)).trace().real() / Z / (n * n), 1e-12);
  EXPECT_NEAR(o.log_z, std::log(Z), 1e-12);
}

TEST(Kubo, FreeSpinAndSymmetry) {
  const Eigen::MatrixXd C0 = Eigen::MatrixXd::Zero(2, 2);
  EXPECT_NEAR(kubo_susceptibility(C0, 0.0, 2.0, 0, 0), 0.5, 1e-14);
  EXPECT_NEAR(kubo_susceptibility(C0, 0.0, 2.0, 0, 1), 0.0, 1e-14);
  Rng rng(6, 6);
  const auto C = random_couplings(4, rng);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(kubo_susceptibility(C, 0.3, 1.1, i, j), kubo_susceptibility(C, 0.3, 1.1, j, i), 1e-13);
}

TEST(Kubo, MatchesImaginaryTimeQuadrature) {
  // Gauss-Legendre integration of <sx_i(0) sx_j(tau)> over [0, beta].
  Rng rng(7, 7);
  const int n = 3;
  const auto C = random_couplings(n, rng);
  const double beta = 1.7, delta = -0.4;
  const CMat H = ref_hamiltonian(C, delta, 0.0);
  const CMat A = site_op(n, 0, spin(0)), B = site_op(n, 2, spin(0));
  const CMat rho = (-beta * H).exp();
  const double Z = rho.trace().real();
  // 20-point Gauss-Legendre nodes via the Golub-Welsch eigenproblem.
  const int m = 20;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  for (int k = 1; k < m; ++k) T(k, k - 1) = T(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  double acc = 0;
  for (int k = 0; k < m; ++k) {
    const double x = es.eigenvalues()[k], w = 2.0 * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
    const double tau = 0.5 * beta * (x + 1.0);
    const CMat Bt = (-tau * H).exp() * B * (tau * H).exp();
    acc += 0.5 * beta * w * (rho * A * Bt).trace().real() / Z;
  }
  EXPECT_NEAR(kubo_susceptibility(C, delta, beta, 0, 2), acc, 1e-10);
}

TEST(Moments, ElementaryValues) {
  Rng rng(8, 8);
  const int n = 5;
  const auto C = random_couplings(n, rng);
  const double delta = 0.6;
  EXPECT_EQ(moment_bruteforce(C, delta, 0, 0), 1.0);
  EXPECT_NEAR(moment_bruteforce(C, delta, 0, 2), n / 4.0, 1e-13);
  EXPECT_NEAR(moment_bruteforce(C, delta, 1, 0), 0.0, 1e-13);
  for (int nn = 0; nn <= 2; ++nn)
    for (int m : {1, 3}) EXPECT_NEAR(moment_bruteforce(C, delta, nn, m), 0.0, 1e-12) << nn << "," << m;
  double a20 = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a20 += C(i, j) * C(i, j) * (2.0 + delta * delta) / 16.0;
  EXPECT_NEAR(moment_bruteforce(C, delta, 2, 0), a20, 1e-13);
  EXPECT_THROW(moment_bruteforce(C, delta, 3, 3), Error);
}

TEST(Quench, InitialStateIsCoherent) {
  Rng rng(9, 9);
  const auto C = random_couplings(5, rng);
  const auto q = quench_dynamics(C, 0.2, {0.0});
  EXPECT_NEAR(q[0].xi2, 1.0, 1e-13);
  EXPECT_NEAR(q[0].sx, 2.5, 1e-13);
}

TEST(Quench, PairOscillatesAtDimerFrequency) {
  std::vector<double> t;
  for (int k = 0; k <= 40; ++k) t.push_back(0.5 * k);
  const auto q = quench_dynamics(pair(1.0), 0.0, t);
  for (const auto& p : q) EXPECT_NEAR(p.sx, std::cos(2.0 * M_PI * p.t / (4.0 * M_PI)), 1e-12) << p.t;
}

TEST(Quench, UndefinedWhereMeanSpinVanishes) {
  const auto q = quench_dynamics(pair(1.0), 0.0, {M_PI});
  EXPECT_FALSE(q[0].squeezing_defined);
  EXPECT_TRUE(std::isnan(q[0].xi2));
}

TEST(Quench, HeisenbergPointIsStationary) {
  Rng rng(10, 10);
  const auto C = random_couplings(6, rng);
  for (const auto& p : quench_dynamics(C, 1.0, {0.0, 1.0, 5.0, 17.0})) {
    EXPECT_NEAR(p.xi2, 1.0, 1e-10);
    EXPECT_NEAR(p.sx, 3.0, 1e-10);
  }
}

TEST(Quench, EnergyConserved) {
  Rng rng(11, 11);
  const auto C = random_couplings(7, rng);
  const auto q = quench_dynamics(C, -0.6, {0.0, 0.7, 3.1, 9.4, 20.0});
  for (const auto& p : q) EXPECT_NEAR(p.energy, q[0].energy, 1e-10);
}

TEST(Quench, MatchesMatrixExponentialReference) {
  Rng rng(12, 12);
  const int n = 4;
  const auto C = random_couplings(n, rng);
  const double delta = 0.3, t = 2.3;
  const CMat H = ref_hamiltonian(C, delta, 0.0);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Constant(H.rows(), std::pow(2.0, -0.5 * n));
  psi = (cd(0, -t) * H).exp() * psi;
  CMat S[3];
  for (int a = 0; a < 3; ++a) {
    S[a] = CMat::Zero(H.rows(), H.cols());
    for (int i = 0; i < n; ++i) S[a] += site_op(n, i, spin(a));
  }
  auto ev = [&](const CMat& O) { return psi.dot(O * psi).real(); };
  const double sx = ev(S[0]), sy = ev(S[1]), sz = ev(S[2]);
  const double vyy = ev(S[1] * S[1]) - sy * sy, vzz = ev(S[2] * S[2]) - sz * sz;
  const double cyz = 0.5 * ev(S[1] * S[2] + S[2] * S[1]) - sy * sz;
  // Smallest variance over directions in the y-z plane, by a fine angle scan.
  double vmin = 1e300;
  for (int k = 0; k < 200000; ++k) {
    const double th = M_PI * k / 200000.0;
    vmin = std::min(vmin, std::cos(th) * std::cos(th) * vyy + std::sin(th) * std::sin(th) * vzz +
                              2.0 * std::sin(th) * std::cos(th) * cyz);
  }
  const auto q = quench_dynamics(C, delta, {t});
  EXPECT_NEAR(q[0].sx, sx, 1e-12);
  EXPECT_NEAR(q[0].xi2, n * vmin / (sx * sx), 1e-8);
  EXPECT_NEAR(q[0].mxy2, ev(S[0] * S[0] + S[1] * S[1]) / (n * n), 1e-12);
}

TEST(Quench, ShelvedSpinsAreRemoved) {
  Rng rng(13, 13);
  const auto C = random_couplings(5, rng);
  const std::vector<std::size_t> keep{0, 2, 4};
  const auto a = quench_dynamics(C, 0.1, {1.5}, {1, 3});
  const auto b = quench_dynamics(restrict_couplings(C, keep), 0.1, {1.5});
  EXPECT_NEAR(a[0].xi2, b[0].xi2, 1e-13);
  EXPECT_NEAR(a[0].sx, b[0].sx, 1e-13);
  try {
    quench_dynamics(C, 0.1, {1.0}, {0, 1, 2, 3, 4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::all_shelved);
  }
}

TEST(SqueezingFormula, SmallestEigenvalue) {
  // Diagonal covariance: min variance is the smaller diagonal entry.
  EXPECT_NEAR(xi2_from_moments(10, 4.0, 1.0, 3.0, 0.0), 10 * 1.0 / 16.0, 1e-15);
  // Rotated ellipse with eigenvalues 0.5 and 2.
  const double th = 0.3, l1 = 0.5, l2 = 2.0;
  const double vyy = l1 * std::cos(th) * std::cos(th) + l2 * std::sin(th) * std::sin(th);
  const double vzz = l1 * std::sin(th) * std::sin(th) + l2 * std::cos(th) * std::cos(th);
  const double cyz = (l1 - l2) * std::sin(th) * std::cos(th);
  EXPECT_NEAR(xi2_from_moments(4, 2.0, vyy, vzz, cyz), 4 * l1 / 4.0, 1e-14);
}
