#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dimer_mft.hpp"
#include "ed.hpp"
#include "error.hpp"
#include "lattice.hpp"
#include "localfields.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace dipsq {

using cplx = std::complex<double>;

namespace dtwa_detail {

// sigma_0 = identity, then x, y, z.
inline Eigen::Matrix2cd pauli(int mu) {
  Eigen::Matrix2cd m;
  switch (mu) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline Eigen::Matrix4cd kron(const Eigen::Matrix2cd& A, const Eigen::Matrix2cd& B) {
  Eigen::Matrix4cd K;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) K.block<2, 2>(2 * i, 2 * j) = A(i, j) * B;
  return K;
}

inline Eigen::Matrix4cd pauli2(int mu, int nu) { return kron(pauli(mu), pauli(nu)); }

struct Term {
  int row, col;
  double v;
};

// Sparse real generator of c -> Tr[(-i[H, rho(c)]) P_row] for the Pauli expansion
// rho = (1/D) sum_k c_k P_k, computed directly from the commutators.
template <int D>
std::vector<Term> generator(const Eigen::Matrix<cplx, D, D>& H) {
  constexpr int K = D * D;
  auto basis = [](int k) -> Eigen::Matrix<cplx, D, D> {
    if constexpr (D == 2) return pauli(k);
    else return pauli2(k / 4, k % 4);
  };
  std::vector<Term> out;
  for (int col = 0; col < K; ++col) {
    const Eigen::Matrix<cplx, D, D> E = basis(col) / double(D);
    const Eigen::Matrix<cplx, D, D> dE = cplx(0, -1) * (H * E - E * H);
    for (int row = 0; row < K; ++row) {
      const double v = (dE * basis(row)).trace().real();
      if (std::abs(v) > 1e-14) out.push_back({row, col, v});
    }
  }
  return out;
}

struct Generators {
  std::array<std::vector<Term>, 3> mono;    // unit field along axis a on a single spin
  std::array<std::vector<Term>, 3> first;   // unit field on the first member of a pair
  std::array<std::vector<Term>, 3> second;  // unit field on the second member
  Generators() {
    for (int a = 0; a < 3; ++a) {
      mono[static_cast<std::size_t>(a)] = generator<2>(Eigen::Matrix2cd(-0.5 * pauli(a + 1)));
      first[static_cast<std::size_t>(a)] = generator<4>(Eigen::Matrix4cd(-0.5 * pauli2(a + 1, 0)));
      second[static_cast<std::size_t>(a)] = generator<4>(Eigen::Matrix4cd(-0.5 * pauli2(0, a + 1)));
    }
  }
};

inline const Generators& generators() {
  static const Generators g;
  return g;
}

// -J (sx sx + sy sy + Delta sz sz) on a pair.
inline Eigen::Matrix4cd pair_hamiltonian(double J, double delta) {
  return -0.25 * J * (pauli2(1, 1) + pauli2(2, 2) + delta * pauli2(3, 3));
}

}  // namespace dtwa_detail

struct ClusterSet {
  std::vector<std::array<std::size_t, 2>> pairs;
  std::vector<std::size_t> monomers;
  std::vector<double> J_intra;  // one per pair
  Eigen::MatrixXd C;            // couplings among simulated spins
  Eigen::MatrixXd C_inter;      // same with intra-pair bonds removed
  double delta = 0.0;

  std::size_t n_spins() const { return static_cast<std::size_t>(C.rows()); }
};

inline ClusterSet make_cluster_set(const Eigen::MatrixXd& C, const Pairing& pairing, double delta) {
  ClusterSet cs;
  cs.C = C;
  cs.C_inter = C;
  cs.delta = delta;
  std::vector<int> seen(static_cast<std::size_t>(C.rows()), 0);
  for (const auto& [i, j] : pairing.pairs) {
    require(i < seen.size() && j < seen.size() && i != j, ErrorKind::invalid_argument, "pair index out of range");
    ++seen[i];
    ++seen[j];
    cs.pairs.push_back({i, j});
    const auto I = static_cast<Eigen::Index>(i), K = static_cast<Eigen::Index>(j);
    cs.J_intra.push_back(C(I, K));
    cs.C_inter(I, K) = 0.0;
    cs.C_inter(K, I) = 0.0;
  }
  for (auto m : pairing.unpaired) {
    require(m < seen.size(), ErrorKind::invalid_argument, "monomer index out of range");
    ++seen[m];
  }
  cs.monomers = pairing.unpaired;
  for (int s : seen) require(s == 1, ErrorKind::invalid_argument, "clusters do not partition the spins");
  return cs;
}

// Drops the shelved spins, then pairs the rest by distance.
inline ClusterSet build_clusters(const Realization& r, const Eigen::MatrixXd& C, double delta, Boundary mode,
                                 const std::vector<std::size_t>& kept) {
  const Realization rk = restrict_realization(r, kept);
  const Eigen::MatrixXd Ck = restrict_couplings(C, kept);
  const Pairing p = rk.N() >= 2 ? match_pairs(rk, mode) : no_pairs(rk.N());
  return make_cluster_set(Ck, p, delta);
}

// Cluster density matrices stored as real Pauli coefficients:
// pair rho = (1/4) sum c[4 mu + nu] sigma_mu (x) sigma_nu, monomer rho = (1/2) sum b[mu] sigma_mu.
// Trace is c[0] (b[0]) and Hermiticity is built in.
struct TrajectoryState {
  std::vector<std::array<double, 16>> pair;
  std::vector<std::array<double, 4>> mono;
  double t = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t traj = 0;
};

inline Eigen::Matrix4cd pair_matrix(const TrajectoryState& st, std::size_t c) {
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  for (int k = 0; k < 16; ++k) m += 0.25 * st.pair[c][static_cast<std::size_t>(k)] * dtwa_detail::pauli2(k / 4, k % 4);
  return m;
}

inline Eigen::Matrix2cd monomer_matrix(const TrajectoryState& st, std::size_t c) {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
  for (int k = 0; k < 4; ++k) m += 0.5 * st.mono[c][static_cast<std::size_t>(k)] * dtwa_detail::pauli(k);
  return m;
}

// Per-spin phase point: Bloch vector (1, sy, sz) with sy, sz = ±1.
struct PhasePoint {
  std::vector<std::array<int, 2>> signs;
};

// Draws for trajectory `traj`. With antithetic sampling, odd trajectories reuse the
// draws of traj - 1 with every sign flipped.
inline PhasePoint draw_phase_point(std::size_t n_spins, std::uint64_t seed, std::uint64_t traj, bool antithetic = true) {
  const std::uint64_t base = antithetic ? (traj & ~std::uint64_t{1}) : traj;
  const int flip = antithetic && (traj & 1u) ? -1 : 1;
  Rng rng(seed, base);
  PhasePoint p;
  p.signs.resize(n_spins);
  for (auto& s : p.signs) {
    s[0] = flip * rng.sign();
    s[1] = flip * rng.sign();
  }
  return p;
}

// Phase point number k of the 4^N equal-weight enumeration.
inline PhasePoint enumerate_phase_point(std::size_t n_spins, std::uint64_t k) {
  PhasePoint p;
  p.signs.resize(n_spins);
  for (std::size_t i = 0; i < n_spins; ++i) {
    p.signs[i][0] = (k >> (2 * i)) & 1u ? -1 : 1;
    p.signs[i][1] = (k >> (2 * i + 1)) & 1u ? -1 : 1;
  }
  return p;
}

// Single-spin phase-point operator (1 + a.sigma)/2 with a = (1, sy, sz). Each has
// <s^x> = 1/2 and the four of them average to the x-polarized state.
inline Eigen::Matrix2cd phase_point_operator(const std::array<int, 2>& s) {
  using dtwa_detail::pauli;
  return 0.5 * (pauli(0) + pauli(1) + double(s[0]) * pauli(2) + double(s[1]) * pauli(3));
}

inline TrajectoryState make_state(const ClusterSet& cs, const PhasePoint& p) {
  auto bloch = [&](std::size_t i) {
    return std::array<double, 4>{1.0, 1.0, double(p.signs[i][0]), double(p.signs[i][1])};
  };
  TrajectoryState st;
  for (const auto& pr : cs.pairs) {
    const auto u = bloch(pr[0]), v = bloch(pr[1]);
    std::array<double, 16> c{};
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t n = 0; n < 4; ++n) c[4 * m + n] = u[m] * v[n];
    st.pair.push_back(c);
  }
  for (auto m : cs.monomers) st.mono.push_back(bloch(m));
  return st;
}

inline TrajectoryState sample_initial(const ClusterSet& cs, std::uint64_t seed, std::uint64_t traj, bool antithetic = true) {
  TrajectoryState st = make_state(cs, draw_phase_point(cs.n_spins(), seed, traj, antithetic));
  st.seed = seed;
  st.traj = traj;
  return st;
}

// Single-spin expectations <s_i^a> written into columns [col, col + 3) of out.
inline void spin_means_into(const ClusterSet& cs, const TrajectoryState& st, Eigen::MatrixXd& out, Eigen::Index col) {
  for (std::size_t c = 0; c < cs.pairs.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(cs.pairs[c][0]), j = static_cast<Eigen::Index>(cs.pairs[c][1]);
    const auto& v = st.pair[c];
    for (std::size_t a = 0; a < 3; ++a) {
      out(i, col + static_cast<Eigen::Index>(a)) = 0.5 * v[4 * (a + 1)];
      out(j, col + static_cast<Eigen::Index>(a)) = 0.5 * v[a + 1];
    }
  }
  for (std::size_t c = 0; c < cs.monomers.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(cs.monomers[c]);
    for (std::size_t a = 0; a < 3; ++a) out(i, col + static_cast<Eigen::Index>(a)) = 0.5 * st.mono[c][a + 1];
  }
}

inline Eigen::MatrixXd spin_means(const ClusterSet& cs, const TrajectoryState& st) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(cs.n_spins()), 3);
  spin_means_into(cs, st, m, 0);
  return m;
}

namespace dtwa_detail {

template <std::size_t K>
inline void apply(const std::vector<Term>& g, double s, const std::array<double, K>& in, std::array<double, K>& out) {
  for (const auto& t : g) out[static_cast<std::size_t>(t.row)] += s * t.v * in[static_cast<std::size_t>(t.col)];
}

// Batched right-hand side: all trajectories share one GEMM for the mean fields.
class Engine {
 public:
  explicit Engine(const ClusterSet& cs) : cs_(cs), intra_(generator<4>(pair_hamiltonian(1.0, cs.delta))) {}

  void rhs(const std::vector<TrajectoryState>& in, std::vector<TrajectoryState>& out) const {
    const auto& g = generators();
    const std::size_t K = in.size();
    const auto N = static_cast<Eigen::Index>(cs_.n_spins());
    means_.resize(N, static_cast<Eigen::Index>(3 * K));
    for (std::size_t k = 0; k < K; ++k) spin_means_into(cs_, in[k], means_, static_cast<Eigen::Index>(3 * k));
    fields_.noalias() = cs_.C_inter * means_;
    for (std::size_t k = 0; k < K; ++k) fields_.col(static_cast<Eigen::Index>(3 * k + 2)) *= cs_.delta;
    for (std::size_t k = 0; k < K; ++k) {
      auto& d = out[k];
      d.pair.resize(in[k].pair.size());
      d.mono.resize(in[k].mono.size());
      const auto col = static_cast<Eigen::Index>(3 * k);
      for (std::size_t c = 0; c < cs_.pairs.size(); ++c) {
        const auto i = static_cast<Eigen::Index>(cs_.pairs[c][0]), j = static_cast<Eigen::Index>(cs_.pairs[c][1]);
        auto& dc = d.pair[c];
        dc.fill(0.0);
        apply(intra_, cs_.J_intra[c], in[k].pair[c], dc);
        for (std::size_t a = 0; a < 3; ++a) {
          apply(g.first[a], fields_(i, col + static_cast<Eigen::Index>(a)), in[k].pair[c], dc);
          apply(g.second[a], fields_(j, col + static_cast<Eigen::Index>(a)), in[k].pair[c], dc);
        }
      }
      for (std::size_t c = 0; c < cs_.monomers.size(); ++c) {
        const auto i = static_cast<Eigen::Index>(cs_.monomers[c]);
        auto& dc = d.mono[c];
        dc.fill(0.0);
        for (std::size_t a = 0; a < 3; ++a) apply(g.mono[a], fields_(i, col + static_cast<Eigen::Index>(a)), in[k].mono[c], dc);
      }
    }
  }

  // Largest field magnitude in the batch, for the step cap.
  double max_field(const std::vector<TrajectoryState>& in) const {
    double best = 0.0;
    for (const auto& st : in) {
      const Eigen::MatrixXd f = cs_.C_inter * spin_means(cs_, st);
      for (Eigen::Index i = 0; i < f.rows(); ++i)
        best = std::max(best, std::sqrt(f(i, 0) * f(i, 0) + f(i, 1) * f(i, 1) + cs_.delta * cs_.delta * f(i, 2) * f(i, 2)));
    }
    return best;
  }

 private:
  const ClusterSet& cs_;
  std::vector<Term> intra_;
  mutable Eigen::MatrixXd means_, fields_;
};

struct Workspace {
  std::vector<TrajectoryState> k1, k2, k3, k4, tmp;
};

// out = y + s * k, elementwise over every cluster of every trajectory.
inline void axpy(std::vector<TrajectoryState>& out, const std::vector<TrajectoryState>& y, double s,
                 const std::vector<TrajectoryState>& k) {
  for (std::size_t b = 0; b < y.size(); ++b) {
    for (std::size_t c = 0; c < y[b].pair.size(); ++c)
      for (std::size_t q = 0; q < 16; ++q) out[b].pair[c][q] = y[b].pair[c][q] + s * k[b].pair[c][q];
    for (std::size_t c = 0; c < y[b].mono.size(); ++c)
      for (std::size_t q = 0; q < 4; ++q) out[b].mono[c][q] = y[b].mono[c][q] + s * k[b].mono[c][q];
  }
}

inline void rk4_step(const Engine& eng, std::vector<TrajectoryState>& y, double dt, Workspace& w) {
  eng.rhs(y, w.k1);
  axpy(w.tmp, y, 0.5 * dt, w.k1);
  eng.rhs(w.tmp, w.k2);
  axpy(w.tmp, y, 0.5 * dt, w.k2);
  eng.rhs(w.tmp, w.k3);
  axpy(w.tmp, y, dt, w.k3);
  eng.rhs(w.tmp, w.k4);
  const double h6 = dt / 6.0;
  for (std::size_t b = 0; b < y.size(); ++b) {
    for (std::size_t c = 0; c < y[b].pair.size(); ++c)
      for (std::size_t q = 0; q < 16; ++q)
        y[b].pair[c][q] += h6 * (w.k1[b].pair[c][q] + 2.0 * w.k2[b].pair[c][q] + 2.0 * w.k3[b].pair[c][q] + w.k4[b].pair[c][q]);
    for (std::size_t c = 0; c < y[b].mono.size(); ++c)
      for (std::size_t q = 0; q < 4; ++q)
        y[b].mono[c][q] += h6 * (w.k1[b].mono[c][q] + 2.0 * w.k2[b].mono[c][q] + 2.0 * w.k3[b].mono[c][q] + w.k4[b].mono[c][q]);
    y[b].t += dt;
  }
}

// Largest deviation of a cluster trace from one; non-finite entries count as infinite.
inline double drift(const std::vector<TrajectoryState>& y) {
  double worst = 0.0;
  auto check = [&](const auto& c) {
    for (double v : c)
      if (!std::isfinite(v)) worst = std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(c[0] - 1.0));
  };
  for (const auto& st : y) {
    for (const auto& c : st.pair) check(c);
    for (const auto& c : st.mono) check(c);
  }
  return worst;
}

inline void renormalize(std::vector<TrajectoryState>& y) {
  for (auto& st : y) {
    for (auto& c : st.pair) c[0] = 1.0;
    for (auto& c : st.mono) c[0] = 1.0;
  }
}

}  // namespace dtwa_detail

struct IntegrationOptions {
  double dt = 0.02;  // requested step; capped by cap_factor / max(J_intra, |h|)
  double cap_factor = 0.02;
  double drift_tol = 1e-6;
};

inline double step_cap(const ClusterSet& cs, const std::vector<TrajectoryState>& batch, const IntegrationOptions& opt) {
  double scale = 0.0;
  for (double J : cs.J_intra) scale = std::max(scale, std::abs(J));
  scale = std::max(scale, dtwa_detail::Engine(cs).max_field(batch));
  return scale > 0.0 ? opt.cap_factor / scale : std::numeric_limits<double>::infinity();
}

// Evolves a batch of trajectories and calls record(k, member, state) at t = k * record_dt
// for k = 0..n_records-1. Integration substeps divide record_dt evenly.
template <class Record>
void evolve_batch(const ClusterSet& cs, std::vector<TrajectoryState>& batch, double record_dt, int n_records,
                  const IntegrationOptions& opt, Record&& record) {
  require(record_dt > 0.0 && n_records >= 1, ErrorKind::invalid_argument, "invalid record grid");
  const double dt_max = std::min(opt.dt, step_cap(cs, batch, opt));
  const int sub = std::max(1, static_cast<int>(std::ceil(record_dt / dt_max - 1e-12)));
  const double dt = record_dt / sub;
  require(dt > 1e-12, ErrorKind::integration_failure, "step size underflow");
  dtwa_detail::Engine eng(cs);
  dtwa_detail::Workspace w{batch, batch, batch, batch, batch};
  for (std::size_t k = 0; k < batch.size(); ++k) record(0, k, batch[k]);
  for (int rec = 1; rec < n_records; ++rec) {
    for (int s = 0; s < sub; ++s) {
      dtwa_detail::rk4_step(eng, batch, dt, w);
      const double dr = dtwa_detail::drift(batch);
      if (dr > opt.drift_tol)
        throw Error(ErrorKind::integration_failure, "cluster trace drift " + std::to_string(dr) + " exceeds tolerance");
      dtwa_detail::renormalize(batch);
    }
    for (auto& st : batch) st.t = rec * record_dt;
    for (std::size_t k = 0; k < batch.size(); ++k) record(rec, k, batch[k]);
  }
}

// Snapshots of one trajectory on the record grid [0, t_max].
inline std::vector<TrajectoryState> evolve(const TrajectoryState& start, const ClusterSet& cs, double record_dt,
                                           double t_max, const IntegrationOptions& opt = {}) {
  const int n = static_cast<int>(std::floor(t_max / record_dt + 1e-9)) + 1;
  std::vector<TrajectoryState> batch{start};
  std::vector<TrajectoryState> snaps;
  evolve_batch(cs, batch, record_dt, n, opt, [&](int, std::size_t, const TrajectoryState& s) { snaps.push_back(s); });
  return snaps;
}

// Collective first and symmetrized second moments of one trajectory.
struct Moments {
  std::array<double, 3> S{};
  std::array<std::array<double, 3>, 3> SS{};
};

// Inter-cluster terms are products of single-spin means; intra-cluster terms come from
// the cluster matrix: Tr[rho sym(S_c^a S_c^b)] = delta_ab / 2 + (c_ab + c_ba) / 4 for a pair.
inline Moments trajectory_moments(const ClusterSet& cs, const TrajectoryState& st) {
  Moments out;
  std::array<double, 3> M{};
  auto add_cluster = [&](auto intra) {
    for (std::size_t a = 0; a < 3; ++a) {
      out.S[a] += M[a];
      for (std::size_t b = 0; b < 3; ++b) out.SS[a][b] += intra(a, b) - M[a] * M[b];
    }
  };
  for (std::size_t c = 0; c < cs.pairs.size(); ++c) {
    const auto& v = st.pair[c];
    for (std::size_t a = 0; a < 3; ++a) M[a] = 0.5 * (v[4 * (a + 1)] + v[a + 1]);
    add_cluster([&](std::size_t a, std::size_t b) {
      return (a == b ? 0.5 : 0.0) + 0.25 * (v[4 * (a + 1) + b + 1] + v[4 * (b + 1) + a + 1]);
    });
  }
  for (std::size_t c = 0; c < cs.monomers.size(); ++c) {
    for (std::size_t a = 0; a < 3; ++a) M[a] = 0.5 * st.mono[c][a + 1];
    add_cluster([](std::size_t a, std::size_t b) { return a == b ? 0.25 : 0.0; });
  }
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) out.SS[a][b] += out.S[a] * out.S[b];
  return out;
}

// Mean-field energy of a trajectory: intra-cluster quantum energy plus the inter-cluster
// classical coupling. Conserved by the cluster mean-field equations.
inline double trajectory_energy(const ClusterSet& cs, const TrajectoryState& st) {
  const Eigen::MatrixXd m = spin_means(cs, st);
  double e = 0.0;
  for (std::size_t c = 0; c < cs.pairs.size(); ++c) {
    const auto& v = st.pair[c];
    e -= 0.25 * cs.J_intra[c] * (v[5] + v[10] + cs.delta * v[15]);
  }
  Eigen::MatrixXd g = m;
  g.col(2) *= cs.delta;
  e -= 0.5 * (m.transpose() * cs.C_inter * g).trace();
  return e;
}

struct SqueezeSeries {
  std::vector<double> t;
  std::vector<double> xi2, xi2_err;
  std::vector<double> mxy2, mxy2_err;
  std::vector<double> sx, sx_err;
  std::size_t n_trajectories = 0;
  std::size_t n_spins = 0;
  // Index of the first sample with <S^x> <= 0; the squeezing parameter is not
  // meaningful from there on (values are still reported where <S^x> != 0).
  std::size_t valid_until = 0;
};

struct SeriesOptions {
  MxyNorm norm = MxyNorm::per_spin_squared;
  int jackknife_blocks = 32;
};

namespace dtwa_detail {

struct Derived {
  double xi2, mxy2, sx;
};

inline Derived derive(const Moments& avg, double n, MxyNorm norm) {
  Derived d;
  d.sx = avg.S[0];
  const double vyy = avg.SS[1][1] - avg.S[1] * avg.S[1];
  const double vzz = avg.SS[2][2] - avg.S[2] * avg.S[2];
  const double cyz = avg.SS[1][2] - avg.S[1] * avg.S[2];
  d.xi2 = d.sx == 0.0 ? std::numeric_limits<double>::quiet_NaN() : xi2_from_moments(n, avg.S[0], vyy, vzz, cyz);
  d.mxy2 = (avg.SS[0][0] + avg.SS[1][1]) * mxy_scale(norm, n);
  return d;
}

inline void accumulate(Moments& acc, const Moments& x, double w) {
  for (std::size_t p = 0; p < 3; ++p) {
    acc.S[p] += w * x.S[p];
    for (std::size_t q = 0; q < 3; ++q) acc.SS[p][q] += w * x.SS[p][q];
  }
}

}  // namespace dtwa_detail

// records[traj][time] -> ensemble series with block-jackknife errors. Blocks keep
// antithetic partners (2k, 2k+1) together.
inline SqueezeSeries squeezing_series(const std::vector<std::vector<Moments>>& records, const std::vector<double>& times,
                                      std::size_t n_spins, const SeriesOptions& opt = {}) {
  require(records.size() >= 2, ErrorKind::insufficient_data, "need at least two trajectories");
  for (std::size_t k = 1; k < times.size(); ++k)
    require(times[k] > times[k - 1], ErrorKind::invalid_argument, "times must be strictly increasing");
  const std::size_t nt = times.size();
  for (const auto& r : records) require(r.size() == nt, ErrorKind::invalid_argument, "record length mismatch");
  const double n = static_cast<double>(n_spins);
  const std::size_t n_traj = records.size();
  const std::size_t unit = n_traj % 2 == 0 && n_traj >= 4 ? 2 : 1;
  const std::size_t units = n_traj / unit;
  const std::size_t B = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(2, opt.jackknife_blocks)), 2, units);
  std::vector<std::size_t> block_of(n_traj);
  for (std::size_t tr = 0; tr < n_traj; ++tr) block_of[tr] = (tr / unit) * B / units;

  SqueezeSeries s;
  s.t = times;
  s.n_trajectories = n_traj;
  s.n_spins = n_spins;
  s.valid_until = nt;
  for (std::size_t k = 0; k < nt; ++k) {
    Moments total;
    std::vector<Moments> block_sum(B);
    std::vector<double> block_count(B, 0.0);
    for (std::size_t tr = 0; tr < n_traj; ++tr) {
      dtwa_detail::accumulate(total, records[tr][k], 1.0);
      dtwa_detail::accumulate(block_sum[block_of[tr]], records[tr][k], 1.0);
      block_count[block_of[tr]] += 1.0;
    }
    Moments avg;
    dtwa_detail::accumulate(avg, total, 1.0 / static_cast<double>(n_traj));
    const auto full = dtwa_detail::derive(avg, n, opt.norm);
    std::vector<dtwa_detail::Derived> jk;
    for (std::size_t b = 0; b < B; ++b) {
      Moments rest;
      dtwa_detail::accumulate(rest, total, 1.0 / (static_cast<double>(n_traj) - block_count[b]));
      dtwa_detail::accumulate(rest, block_sum[b], -1.0 / (static_cast<double>(n_traj) - block_count[b]));
      jk.push_back(dtwa_detail::derive(rest, n, opt.norm));
    }
    auto jk_err = [&](auto get) {
      double m = 0.0;
      for (const auto& d : jk) m += get(d);
      m /= static_cast<double>(B);
      double ss = 0.0;
      for (const auto& d : jk) ss += (get(d) - m) * (get(d) - m);
      return std::sqrt(ss * static_cast<double>(B - 1) / static_cast<double>(B));
    };
    s.sx.push_back(full.sx);
    s.sx_err.push_back(jk_err([](const auto& d) { return d.sx; }));
    s.mxy2.push_back(full.mxy2);
    s.mxy2_err.push_back(jk_err([](const auto& d) { return d.mxy2; }));
    s.xi2.push_back(full.xi2);
    s.xi2_err.push_back(jk_err([](const auto& d) { return d.xi2; }));
    if (full.sx <= 0.0 && s.valid_until == nt) s.valid_until = k;
  }
  return s;
}

struct DtwaRun {
  double t_max = 20.0;
  double record_dt = 0.1;
  std::size_t n_trajectories = 2000;
  std::uint64_t seed = 0;
  bool antithetic = true;
  bool exhaustive = false;  // all 4^N phase points with equal weight (small N only)
  std::size_t batch = 32;
  unsigned workers = 1;
  IntegrationOptions integ;
  SeriesOptions series;
};

inline SqueezeSeries run_dtwa(const ClusterSet& cs, const DtwaRun& run) {
  const std::size_t N = cs.n_spins();
  require(N >= 1, ErrorKind::all_shelved, "no spins to simulate");
  const int n_rec = static_cast<int>(std::floor(run.t_max / run.record_dt + 1e-9)) + 1;
  std::vector<double> times;
  for (int k = 0; k < n_rec; ++k) times.push_back(k * run.record_dt);

  std::size_t n_traj = run.n_trajectories;
  if (run.exhaustive) {
    require(N <= 8, ErrorKind::capacity, "exhaustive phase-point enumeration supports up to 8 spins");
    n_traj = std::size_t{1} << (2 * N);
  }
  require(n_traj >= 2, ErrorKind::insufficient_data, "need at least two trajectories");
  std::vector<std::vector<Moments>> records(n_traj, std::vector<Moments>(static_cast<std::size_t>(n_rec)));
  const std::size_t bsz = std::max<std::size_t>(1, run.batch);
  const std::size_t n_batches = (n_traj + bsz - 1) / bsz;
  parallel_for(n_batches, run.workers, [&](std::size_t b) {
    const std::size_t lo = b * bsz, hi = std::min(n_traj, lo + bsz);
    std::vector<TrajectoryState> batch;
    for (std::size_t tr = lo; tr < hi; ++tr)
      batch.push_back(run.exhaustive ? make_state(cs, enumerate_phase_point(N, tr))
                                     : sample_initial(cs, run.seed, tr, run.antithetic));
    evolve_batch(cs, batch, run.record_dt, n_rec, run.integ, [&](int rec, std::size_t k, const TrajectoryState& st) {
      records[lo + k][static_cast<std::size_t>(rec)] = trajectory_moments(cs, st);
    });
  });
  SqueezeSeries s = squeezing_series(records, times, N, run.series);
  if (run.exhaustive) {
    // The enumeration is the exact phase-space average; there is no sampling error.
    for (auto* v : {&s.xi2_err, &s.mxy2_err, &s.sx_err}) std::fill(v->begin(), v->end(), 0.0);
  }
  return s;
}

// Dimer oscillation frequencies for separations 1, sqrt(2), 2 (units of a):
// (1 - Delta) J / (4 pi d^3).
inline std::array<double, 3> dimer_frequencies(double delta = 0.0, double a = 1.0, double J = 1.0) {
  std::array<double, 3> nu{};
  const std::array<double, 3> d{1.0, std::sqrt(2.0), 2.0};
  for (std::size_t k = 0; k < 3; ++k) nu[k] = (1.0 - delta) * J / (4.0 * M_PI * std::pow(d[k] * a, 3));
  return nu;
}

inline double notch_response(double nu, const std::array<double, 3>& centers, double rel_width = 0.1) {
  double r = 1.0;
  for (double c : centers) {
    const double u = (std::abs(nu) - c) / (rel_width * c);
    r *= 1.0 - std::exp(-0.5 * u * u);
  }
  return r;
}

// Zero-phase Gaussian notches at the three fastest dimer frequencies, applied to the
// spectrum of the mirrored (even) extension of a uniformly sampled series.
inline std::vector<double> notch_filter(const std::vector<double>& x, double dt, double delta = 0.0, double a = 1.0,
                                        double J = 1.0, double rel_width = 0.1) {
  require(dt > 0.0, ErrorKind::invalid_argument, "time step must be positive");
  const auto centers = dimer_frequencies(delta, a, J);
  const double slowest = *std::min_element(centers.begin(), centers.end());
  require(slowest > 0.0, ErrorKind::invalid_argument, "notch frequencies vanish at the Heisenberg point");
  const double length = x.size() > 1 ? dt * static_cast<double>(x.size() - 1) : 0.0;
  require(x.size() >= 3 && length >= 4.0 / slowest, ErrorKind::insufficient_length,
          "series spans " + std::to_string(length) + " time units, need " + std::to_string(4.0 / slowest));
  const std::size_t n = x.size();
  std::vector<double> ext(x);
  for (std::size_t k = n - 2; k >= 1; --k) ext.push_back(x[k]);
  const std::size_t M = ext.size();
  Eigen::FFT<double> fft;
  std::vector<cplx> spec;
  fft.fwd(spec, ext);
  for (std::size_t k = 0; k < M; ++k) {
    const double kk = k <= M / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(M);
    spec[k] *= notch_response(kk / (static_cast<double>(M) * dt), centers, rel_width);
  }
  std::vector<double> back;
  fft.inv(back, spec);
  back.resize(n);
  return back;
}

}  // namespace dipsq
