// Command-line driver: every subcommand reads a JSON config (optional), applies flag
// overrides, writes its CSVs into --out and finishes with manifest.json.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dipsq/dimer_mft.hpp"
#include "dipsq/dtwa.hpp"
#include "dipsq/ed.hpp"
#include "dipsq/io.hpp"
#include "dipsq/lattice.hpp"
#include "dipsq/localfields.hpp"
#include "dipsq/meanfield.hpp"
#include "dipsq/stats.hpp"
#include "dipsq/strongdisorder.hpp"

#ifndef DIPSQ_VERSION
#define DIPSQ_VERSION "unknown"
#endif

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace dipsq;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag values that were given explicitly are copied over the config afterwards.
class Overrides {
 public:
  template <class T>
  void option(CLI::App* app, const std::string& key, const std::string& help, std::string flag_name = {}) {
    auto var = std::make_shared<T>();
    CLI::Option* o = app->add_option("--" + (flag_name.empty() ? key : flag_name), *var, help);
    if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::string>>)
      o->delimiter(',');
    setters_.push_back([o, var, key](json& cfg) {
      if (o->count() > 0) cfg[key] = *var;
    });
  }

  void flag(CLI::App* app, const std::string& key, const std::string& help) {
    auto var = std::make_shared<bool>(false);
    CLI::Option* o = app->add_flag("--" + key, *var, help);
    setters_.push_back([o, var, key](json& cfg) {
      if (o->count() > 0) cfg[key] = *var;
    });
  }

  void apply(json& cfg) const {
    for (const auto& s : setters_) s(cfg);
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

std::string config_path_from_argv(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  // A manifest from an earlier run is accepted as a config.
  if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
  if (!j.is_object()) throw UsageError("config " + path + ": top level must be an object");
  return j;
}

template <class T>
T get(const json& cfg, const std::string& key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + key + "' is missing or has the wrong type");
  }
}

double get_number_or_inf(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    try {
      return parse_number(s);
    } catch (const Error&) {
    }
  }
  throw UsageError("expected a number or \"inf\", got " + v.dump());
}

std::vector<double> get_list(const json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw UsageError("missing required list --" + key);
  const json& v = cfg.at(key);
  std::vector<double> out;
  if (v.is_array()) {
    for (const auto& x : v) out.push_back(get_number_or_inf(x));
  } else {
    out.push_back(get_number_or_inf(v));
  }
  if (out.empty()) throw UsageError("--" + key + " must not be empty");
  return out;
}

std::uint64_t require_seed(const json& cfg) {
  if (!cfg.contains("seed") || cfg["seed"].is_null()) throw UsageError("--seed is required for this command");
  return get<std::uint64_t>(cfg, "seed");
}

// Independent seed for the ensemble at grid index k.
std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t k) { return splitmix64(seed ^ splitmix64(k + 0x51ed2701ULL)); }

json base_manifest(const std::string& command, const json& cfg, double wall) {
  json m;
  m["command"] = command;
  m["version"] = DIPSQ_VERSION;
  json c = cfg;
  c["command"] = command;
  m["config"] = c;
  m["wall_time_seconds"] = wall;
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Boundary boundary_of(const json& cfg) {
  try {
    return boundary_from_string(get<std::string>(cfg, "boundary"));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

unsigned workers_of(const json& cfg) { return cfg.contains("workers") ? get<unsigned>(cfg, "workers") : 1u; }

// ---------------------------------------------------------------- constants

int cmd_constants(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const double tol = get<double>(cfg, "rel_tol");
  const SumConstants c = compute_sum_constants(tol);
  const ChiPeak cp = chi_peak();
  CsvTable t({"name", "value"});
  auto row = [&](const std::string& n, double v) { t.add_row({n, format_number(v)}); };
  row("s1", c.s1);
  row("s2", c.s2);
  row("s3", c.s3);
  row("s_tri", c.s_tri);
  row("ce1_constant", ce1_constant(c));
  row("tc_mf_f1", tc_mean_field(1.0, c));
  row("chi_peak_gap_over_T", cp.gap_over_T);
  row("chi_peak_ratio", cp.ratio);
  const auto nu = dimer_frequencies();
  row("dimer_frequency_d1", nu[0]);
  row("dimer_frequency_dsqrt2", nu[1]);
  row("dimer_frequency_d2", nu[2]);
  for (const auto& m : motif_table()) t.add_row({"motif_threshold:" + m.label, format_number(m.threshold)});
  RunOutput out(get<std::string>(cfg, "out"));
  out.write("constants.csv", t);
  std::cout << t.str();
  out.finish(base_manifest("constants", cfg, seconds_since(t0)));
  return 0;
}

// ---------------------------------------------------------------- phase-diagram

int cmd_phase_diagram(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fs_ = get_list(cfg, "f");
  const auto deltas = get_list(cfg, "delta");
  const int L = get<int>(cfg, "L");
  const int R = get<int>(cfg, "realizations");
  const int B = get<int>(cfg, "bootstrap");
  const Boundary mode = boundary_of(cfg);
  const std::uint64_t seed = require_seed(cfg);
  const unsigned workers = workers_of(cfg);
  if (R < 0) throw UsageError("--realizations must be >= 0");

  const SumConstants& c = default_constants();
  RunOutput out(get<std::string>(cfg, "out"));
  CsvTable t({"f", "delta", "Tc_MF", "Tc_CE1", "Tc_CE2", "Delta_peak_CE2", "Delta_peak_in_domain", "Tc_dimerMFT",
              "Tc_dimerMFT_err", "beta_c_dimerMFT", "beta_c_dimerMFT_err", "n_realizations", "N"});
  json seeds = json::array();
  for (std::size_t fi = 0; fi < fs_.size(); ++fi) {
    const double f = fs_[fi];
    double cur_delta = deltas.front();
    try {
      std::vector<DimerSample> samples;
      double n_spins = std::nan("");
      const std::uint64_t ens_seed = derived_seed(seed, fi);
      if (R > 0) {
        const LatticeSpec spec{L, 1.0, f, 1.0, mode};
        spec.validate();
        samples.resize(static_cast<std::size_t>(R));
        parallel_for(samples.size(), workers, [&](std::size_t k) {
          samples[k] = prepare_dimer_sample(dilute(spec, ens_seed, k), mode);
        });
        seeds.push_back({{"f", f}, {"realization_seed", ens_seed}, {"streams", R}});
        n_spins = static_cast<double>(samples.front().C.rows());
      }
      const PeakAnisotropy peak = delta_peak_ce2(f, c);
      for (double d : deltas) {
        cur_delta = d;
        const double tmf = tc_mean_field(f, c);
        const double tce1 = 1.0 / beta_c_ce1(f, d, c);
        const double tce2 = 1.0 / beta_c_series_ce2(f, d, c, 1.0, 2).beta;
        double tdm = std::nan(""), tdm_err = std::nan(""), bdm = std::nan(""), bdm_err = std::nan("");
        if (R > 0) {
          const EnsembleBeta eb = solve_beta_c_dimer(samples, d, workers, derived_seed(seed, 1000 + fi), B);
          tdm = 1.0 / eb.mean;
          tdm_err = eb.error / (eb.mean * eb.mean);
          bdm = eb.mean;
          bdm_err = eb.error;
        }
        t.add({f, d, tmf, tce1, tce2, peak.value, peak.in_domain ? 1.0 : 0.0, tdm, tdm_err, bdm, bdm_err,
               static_cast<double>(R), n_spins});
      }
    } catch (const Error& e) {
      out.write("phase_diagram.csv", t);  // partial results, no manifest
      std::cerr << "error at f=" << f << ", delta=" << cur_delta << ": " << e.what()
                << "\n";
      return 1;
    }
  }
  out.write("phase_diagram.csv", t);
  json m = base_manifest("phase-diagram", cfg, seconds_since(t0));
  m["seeds"] = seeds;
  out.finish(m);
  return 0;
}

// ---------------------------------------------------------------- squeeze

// Free text goes into a comma-separated cell.
std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

Realization single_pair_realization() {
  Realization r;
  r.spec = LatticeSpec{4, 1.0, 0.125, 1.0, Boundary::open};
  r.sites = {{0, 0}, {1, 0}};
  return r;
}

int cmd_squeeze(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = require_seed(cfg);
  const double f = get<double>(cfg, "f");
  const double delta = get<double>(cfg, "delta");
  const int L = get<int>(cfg, "L");
  std::vector<double> J0s;
  {
    json j0 = cfg.at("J0");
    if (!j0.is_array()) j0 = json::array({j0});
    for (const auto& v : j0) {
      if (v.is_string() && v.get<std::string>() == "motifs") {
        for (const auto& m : motif_table()) J0s.push_back(m.threshold);
      } else {
        J0s.push_back(get_number_or_inf(v));
      }
    }
    if (J0s.empty()) throw UsageError("--J0 must not be empty");
  }
  const Boundary mode = boundary_of(cfg);
  const bool single = get<bool>(cfg, "single_pair");

  DtwaRun run;
  run.t_max = get<double>(cfg, "t_max");
  run.record_dt = get<double>(cfg, "record_dt");
  run.n_trajectories = get<std::size_t>(cfg, "trajectories");
  run.batch = get<std::size_t>(cfg, "batch");
  run.exhaustive = get<bool>(cfg, "exhaustive") || single;
  run.workers = workers_of(cfg);
  run.seed = derived_seed(seed, 0);
  if (run.t_max <= 0 || run.record_dt <= 0) throw UsageError("--t_max and --record_dt must be positive");

  Realization r;
  std::uint64_t stream = get<std::uint64_t>(cfg, "realization");
  if (single) {
    r = single_pair_realization();
  } else {
    const LatticeSpec spec{L, 1.0, f, 1.0, mode};
    spec.validate();
    if (cfg.contains("shelved_window")) {
      const auto w = get<std::vector<double>>(cfg, "shelved_window");
      if (w.size() != 2 || w[0] > w[1]) throw UsageError("--shelved_window needs lo,hi");
      if (std::isinf(J0s.front())) throw UsageError("--shelved_window needs a finite first J0");
      stream = stream_with_shelved_fraction(spec, seed, J0s.front(), w[0], w[1], stream, 200);
    }
    r = dilute(spec, seed, stream);
  }
  const CouplingMatrix C = coupling_matrix(r, single ? Boundary::open : mode);

  RunOutput out(get<std::string>(cfg, "out"));
  out.write("realization.json", realization_to_json(r).dump() + "\n");
  CsvTable summary({"J0", "N", "N_kept", "shelved_fraction", "n_pairs", "min_xi2", "min_xi2_err", "t_min", "status",
                    "message"});
  const bool filter = get<bool>(cfg, "filter");
  for (std::size_t k = 0; k < J0s.size(); ++k) {
    const double J0 = J0s[k];
    std::vector<std::size_t> kept;
    double fraction = 0.0;
    try {
      if (std::isinf(J0)) {
        for (std::size_t i = 0; i < r.N(); ++i) kept.push_back(i);
      } else {
        const ShelveResult sh = shelve(C, J0);
        kept = sh.kept;
        fraction = sh.fraction;
      }
      const ClusterSet cs = build_clusters(r, C, delta, single ? Boundary::open : mode, kept);
      const SqueezeSeries s = run_dtwa(cs, run);

      std::vector<double> xf(s.t.size(), std::nan("")), mf(s.t.size(), std::nan(""));
      std::string note;
      if (filter) {
        const bool finite = std::all_of(s.xi2.begin(), s.xi2.end(), [](double v) { return std::isfinite(v); });
        try {
          if (finite) xf = notch_filter(s.xi2, run.record_dt, delta);
          mf = notch_filter(s.mxy2, run.record_dt, delta);
        } catch (const Error& e) {
          note = csv_safe(std::string("filter skipped: ") + e.what());
        }
      }
      CsvTable t({"t", "xi2", "xi2_err", "mxy2", "mxy2_err", "Sx", "Sx_err", "xi2_filtered", "mxy2_filtered", "valid"});
      std::size_t imin = 0;
      for (std::size_t i = 0; i < s.t.size(); ++i) {
        t.add({s.t[i], s.xi2[i], s.xi2_err[i], s.mxy2[i], s.mxy2_err[i], s.sx[i], s.sx_err[i], xf[i], mf[i],
               i < s.valid_until ? 1.0 : 0.0});
        if (i < s.valid_until && std::isfinite(s.xi2[i]) && (s.xi2[i] < s.xi2[imin] || !std::isfinite(s.xi2[imin])))
          imin = i;
      }
      out.write("squeeze_" + std::to_string(k) + ".csv", t);
      summary.add_row({format_number(J0), std::to_string(r.N()), std::to_string(cs.n_spins()), format_number(fraction),
                       std::to_string(cs.pairs.size()), format_number(s.xi2[imin]), format_number(s.xi2_err[imin]),
                       format_number(s.t[imin]), "ok", note});
    } catch (const Error& e) {
      summary.add_row({format_number(J0), std::to_string(r.N()), "0", format_number(1.0), "0", "nan", "nan", "nan",
                       "error", csv_safe(e.what())});
    }
  }
  out.write("summary.csv", summary);
  json m = base_manifest("squeeze", cfg, seconds_since(t0));
  m["seeds"] = {{"realization_seed", seed}, {"realization_stream", stream}, {"trajectory_seed", run.seed}};
  out.finish(m);
  return 0;
}

// ---------------------------------------------------------------- analyze

CurveFamily read_curves(const CsvTable& t) {
  t.require_columns({"L", "beta", "value", "error"});
  const auto Ls = t.numbers("L"), bs = t.numbers("beta"), vs = t.numbers("value"), es = t.numbers("error");
  CurveFamily fam;
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    auto it = std::find_if(fam.begin(), fam.end(), [&](const Curve& c) { return c.L == Ls[i]; });
    if (it == fam.end()) {
      fam.push_back(Curve{Ls[i], {}, {}, {}});
      it = fam.end() - 1;
    }
    it->beta.push_back(bs[i]);
    it->value.push_back(vs[i]);
    it->error.push_back(es[i]);
  }
  std::sort(fam.begin(), fam.end(), [](const Curve& a, const Curve& b) { return a.L < b.L; });
  return fam;
}

int cmd_analyze(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string task = get<std::string>(cfg, "task");
  if (!cfg.contains("input")) throw UsageError("--input is required");
  const CsvTable in = read_csv(get<std::string>(cfg, "input"));
  RunOutput out(get<std::string>(cfg, "out"));
  json m;
  if (task == "crossing") {
    const std::uint64_t seed = require_seed(cfg);
    const CurveFamily fam = read_curves(in);
    if (fam.size() < 2) throw Error(ErrorKind::insufficient_data, "crossing needs at least two sizes");
    const double eta = get<double>(cfg, "eta");
    CsvTable t({"L1", "L2", "beta_cross", "beta_cross_err"});
    for (std::size_t k = 0; k + 1 < fam.size(); ++k) {
      const auto bc = crossing_beta_bootstrap(fam[k], fam[k + 1], eta, get<int>(cfg, "bootstrap"), derived_seed(seed, k),
                                              get<bool>(cfg, "double_errors"));
      t.add({fam[k].L, fam[k + 1].L, bc.estimate, bc.error});
    }
    out.write("crossings.csv", t);
  } else if (task == "collapse") {
    const CurveFamily fam = read_curves(in);
    const double bc = get<double>(cfg, "beta_c"), eta = get<double>(cfg, "eta"), nu = get<double>(cfg, "nu");
    const auto pts = collapse_coordinates(fam, bc, eta, nu);
    CsvTable t({"L", "x", "y"});
    for (const auto& curve : pts)
      for (const auto& p : curve) t.add({p.L, p.x, p.y});
    out.write("collapse.csv", t);
    CsvTable q({"beta_c", "eta", "nu", "quality"});
    q.add({bc, eta, nu, collapse_quality(pts)});
    out.write("collapse_quality.csv", q);
  } else if (task == "control-variates") {
    in.require_columns({"m", "J"});
    if (!cfg.contains("true_mean")) throw UsageError("--true_mean is required for control-variates");
    const auto r = control_variate_adjust(in.numbers("m"), in.numbers("J"), get<double>(cfg, "true_mean"));
    CsvTable t({"raw_mean", "adjusted_mean", "coefficient", "degenerate"});
    t.add({r.raw_mean, r.mean, r.coefficient, r.degenerate ? 1.0 : 0.0});
    out.write("control_variates.csv", t);
  } else if (task == "ec") {
    in.require_columns({"beta", "E", "err"});
    const auto b = in.numbers("beta"), E = in.numbers("E"), err = in.numbers("err");
    std::vector<EnergyPoint> pts;
    for (std::size_t i = 0; i < b.size(); ++i) pts.push_back({b[i], E[i], err[i]});
    const double bc = get<double>(cfg, "beta_c");
    const auto v = interpolate_Ec(pts, bc);
    CsvTable t({"beta_c", "E_c", "E_c_err"});
    t.add({bc, v.value, v.error});
    out.write("ec.csv", t);
  } else {
    throw UsageError("unknown analyze task '" + task + "' (crossing, collapse, control-variates, ec)");
  }
  out.finish(base_manifest("analyze", cfg, seconds_since(t0)));
  return 0;
}

// ---------------------------------------------------------------- local-fields

int cmd_local_fields(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = require_seed(cfg);
  const double f = get<double>(cfg, "f");
  const int L = get<int>(cfg, "L");
  const int R = get<int>(cfg, "realizations");
  const Boundary mode = boundary_of(cfg);
  if (R < 1) throw UsageError("--realizations must be >= 1");
  const LatticeSpec spec{L, 1.0, f, 1.0, mode};
  spec.validate();

  std::vector<double> fields, nn;
  CsvTable samples({"realization", "index", "J_i", "r_nn"});
  for (int k = 0; k < R; ++k) {
    const Realization r = dilute(spec, seed, static_cast<std::uint64_t>(k));
    const Eigen::VectorXd J = local_fields(r, mode);
    const auto d = nearest_neighbor_distances(r, mode == Boundary::periodic_images);
    for (std::size_t i = 0; i < r.N(); ++i) {
      fields.push_back(J[static_cast<Eigen::Index>(i)]);
      nn.push_back(d[i]);
      samples.add({static_cast<double>(k), static_cast<double>(i), J[static_cast<Eigen::Index>(i)], d[i]});
    }
  }
  const FieldHistogram h = field_histogram(fields, get<int>(cfg, "bins"));
  CsvTable hist({"bin_left", "bin_right", "density", "analytic_density"});
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double mid = std::sqrt(h.edges[b] * h.edges[b + 1]);
    hist.add({h.edges[b], h.edges[b + 1], h.counts[b], field_pdf(mid, f, 1.0, 1.0)});
  }
  double lg = 0.0;
  for (double x : nn) lg += std::log(x);
  const double rgeo = std::exp(lg / static_cast<double>(nn.size()));
  const double Dnn = ks_statistic(nn, [&](double x) { return nn_distance_cdf(x, f, 1.0); });
  const double DJ = ks_statistic(fields, [&](double x) { return field_cdf(x, f, 1.0, 1.0); });
  CsvTable summary({"n_samples", "ks_nn", "p_nn", "ks_J", "p_J", "r_geo", "r_typ", "r_rel_dev"});
  summary.add({static_cast<double>(nn.size()), Dnn, ks_pvalue(Dnn, nn.size()), DJ, ks_pvalue(DJ, fields.size()), rgeo,
               r_typ(f), rgeo / r_typ(f) - 1.0});
  CsvTable motifs({"label", "threshold"});
  for (const auto& mo : motif_table()) motifs.add_row({mo.label, format_number(mo.threshold)});

  RunOutput out(get<std::string>(cfg, "out"));
  out.write("fields.csv", samples);
  out.write("histogram.csv", hist);
  out.write("summary.csv", summary);
  out.write("motifs.csv", motifs);
  json m = base_manifest("local-fields", cfg, seconds_since(t0));
  m["seeds"] = {{"realization_seed", seed}, {"streams", R}};
  out.finish(m);
  return 0;
}

// ---------------------------------------------------------------- strong-disorder

int cmd_strong_disorder(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fs_ = get_list(cfg, "f");
  const double kappa = get<double>(cfg, "kappa");
  const bool has_f0 = cfg.contains("anchor_f0"), has_v = cfg.contains("anchor_value");
  if (has_f0 != has_v) throw UsageError("--anchor_f0 and --anchor_value must be given together");
  std::optional<BoundaryAnchor> anchor;
  if (has_f0) anchor = BoundaryAnchor{get<double>(cfg, "anchor_f0"), get<double>(cfg, "anchor_value")};
  const std::string method = get<std::string>(cfg, "method");
  if (method != "hypergeometric" && method != "quadrature") throw UsageError("--method must be hypergeometric or quadrature");
  const EcMethod em = method == "quadrature" ? EcMethod::quadrature : EcMethod::hypergeometric;

  const ScalingForms sf = self_consistent_scaling(kappa);
  RunOutput out(get<std::string>(cfg, "out"));
  // Without an anchor only dimensionless scaling output is produced.
  std::vector<std::string> cols{"f", "regime", "self_consistent", "asymptotic_form", "preasymptotic_form"};
  if (anchor) {
    cols.push_back("one_minus_delta_c");
    cols.push_back("anchored_asymptotic");
    cols.push_back("anchored_preasymptotic");
  }
  CsvTable t(cols);
  for (double f : fs_) {
    const Regime regime = f < sf.crossover_f ? Regime::asymptotic : Regime::preasymptotic;
    std::vector<std::string> row{format_number(f), to_string(regime), format_number(self_consistent_boundary(f, kappa)),
                                 format_number(sf.asymptotic_coefficient * std::sqrt(f)),
                                 format_number(sf.preasymptotic_coefficient * f)};
    if (anchor) {
      row.push_back(format_number(delta_c_boundary(f, regime, anchor).one_minus_delta_c));
      row.push_back(format_number(delta_c_boundary(f, Regime::asymptotic, anchor).one_minus_delta_c));
      row.push_back(format_number(delta_c_boundary(f, Regime::preasymptotic, anchor).one_minus_delta_c));
    }
    t.add_row(row);
  }
  out.write("boundary.csv", t);
  CsvTable s({"kappa", "asymptotic_coefficient", "preasymptotic_coefficient", "crossover_f"});
  s.add({kappa, sf.asymptotic_coefficient, sf.preasymptotic_coefficient, sf.crossover_f});
  out.write("scaling.csv", s);

  if (cfg.contains("delta") && cfg.contains("h")) {
    CsvTable ec({"f", "delta", "h", "delta_Ec"});
    for (double f : fs_)
      for (double d : get_list(cfg, "delta"))
        for (double h : get_list(cfg, "h")) ec.add({f, d, h, delta_Ec(f, d, h, 1.0, 1.0, em)});
    out.write("delta_Ec.csv", ec);
  }
  out.finish(base_manifest("strong-disorder", cfg, seconds_since(t0)));
  return 0;
}

// ---------------------------------------------------------------- oracle

std::vector<Site> parse_sites(const std::string& s) {
  std::vector<Site> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto comma = item.find(':');
    if (comma == std::string::npos) throw UsageError("sites must look like 'x:y;x:y;...'");
    out.push_back({static_cast<int>(parse_number(item.substr(0, comma))), static_cast<int>(parse_number(item.substr(comma + 1)))});
  }
  if (out.empty()) throw UsageError("--sites is empty");
  return out;
}

int cmd_oracle(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string task = get<std::string>(cfg, "task");
  Realization r;
  r.sites = parse_sites(get<std::string>(cfg, "sites"));
  int extent = 2;
  for (const auto& s : r.sites) extent = std::max({extent, s.x + 1, s.y + 1});
  r.spec = LatticeSpec{extent, 1.0, 1.0, 1.0, Boundary::open};
  const CouplingMatrix C = coupling_matrix(r, Boundary::open);
  const double delta = get<double>(cfg, "delta");
  RunOutput out(get<std::string>(cfg, "out"));
  if (task == "quench") {
    std::vector<double> times;
    const double tmax = get<double>(cfg, "t_max"), dt = get<double>(cfg, "record_dt");
    for (int k = 0; k * dt <= tmax + 1e-9; ++k) times.push_back(k * dt);
    std::vector<std::size_t> shelved;
    const double J0 = get_number_or_inf(cfg.at("J0").is_array() ? cfg.at("J0").at(0) : cfg.at("J0"));
    if (!std::isinf(J0)) {
      const auto kept = shelve(C, J0).kept;
      for (std::size_t i = 0; i < r.N(); ++i)
        if (std::find(kept.begin(), kept.end(), i) == kept.end()) shelved.push_back(i);
    }
    CsvTable t({"t", "xi2", "mxy2", "Sx", "energy"});
    for (const auto& q : quench_dynamics(C, delta, times, shelved)) t.add({q.t, q.xi2, q.mxy2, q.sx, q.energy});
    out.write("quench.csv", t);
  } else if (task == "thermal") {
    CsvTable t({"beta", "energy_per_spin", "mxy2", "Sx"});
    for (double b : get_list(cfg, "beta")) {
      const auto o = thermal_observables(C, delta, get<double>(cfg, "h"), b);
      t.add({b, o.energy_per_spin, o.mxy2, o.sx});
    }
    out.write("thermal.csv", t);
  } else if (task == "moments") {
    const BCoefficients closed = b_coefficients(C, delta);
    const BCoefficients brute = b_from_moments(C, delta);
    CsvTable t({"name", "closed_form", "brute_force"});
    t.add_row({"B1", format_number(closed.B1), format_number(brute.B1)});
    t.add_row({"B2", format_number(closed.B2), format_number(brute.B2)});
    t.add_row({"B3", format_number(closed.B3), format_number(brute.B3)});
    out.write("moments.csv", t);
  } else {
    throw UsageError("unknown oracle task '" + task + "' (quench, thermal, moments)");
  }
  out.finish(base_manifest("oracle", cfg, seconds_since(t0)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diluted dipolar XXZ magnets: phase boundaries, squeezing dynamics and analysis tools"};
  app.fallthrough();
  app.require_subcommand(1);
  Overrides global;
  global.option<std::uint64_t>(&app, "seed", "master seed (required for stochastic commands)");
  global.option<unsigned>(&app, "workers", "worker threads; results do not depend on this");
  global.option<std::string>(&app, "out", "output directory");
  std::string config_path;
  app.add_option("--config", config_path, "JSON config; explicit flags take precedence");

  struct Sub {
    CLI::App* app;
    Overrides ov;
    json defaults;
    std::function<int(const json&)> run;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto add = [&](const std::string& name, const std::string& help, json defaults, std::function<int(const json&)> fn) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, help);
    s->defaults = std::move(defaults);
    s->run = std::move(fn);
    subs.push_back(std::move(s));
    return subs.back().get();
  };

  auto* constants = add("constants", "lattice sums and derived constants", {{"rel_tol", 1e-8}}, cmd_constants);
  constants->ov.option<double>(constants->app, "rel_tol", "relative tolerance of the lattice sums");

  auto* pd = add("phase-diagram", "mean-field, cluster-expansion and dimer-MFT critical temperatures",
                 {{"L", 50}, {"realizations", 0}, {"boundary", "periodic"}, {"bootstrap", 1000}}, cmd_phase_diagram);
  pd->ov.option<std::vector<double>>(pd->app, "f", "filling fractions");
  pd->ov.option<std::vector<double>>(pd->app, "delta", "anisotropies");
  pd->ov.option<int>(pd->app, "L", "lattice size for dimer MFT");
  pd->ov.option<int>(pd->app, "realizations", "dimer-MFT realizations per filling (0 skips dimer MFT)");
  pd->ov.option<std::string>(pd->app, "boundary", "open or periodic");
  pd->ov.option<int>(pd->app, "bootstrap", "bootstrap replicas");

  auto* sq = add("squeeze", "cluster DTWA squeezing dynamics after shelving",
                 {{"f", 0.05}, {"delta", 0.0}, {"L", 100}, {"J0", json::array({"inf"})}, {"trajectories", 2000},
                  {"t_max", 40.0}, {"record_dt", 0.5}, {"boundary", "periodic"}, {"realization", 0}, {"batch", 32},
                  {"exhaustive", false}, {"single_pair", false}, {"filter", true}},
                 cmd_squeeze);
  sq->ov.option<double>(sq->app, "f", "filling fraction");
  sq->ov.option<double>(sq->app, "delta", "anisotropy");
  sq->ov.option<int>(sq->app, "L", "lattice size");
  sq->ov.option<std::vector<std::string>>(sq->app, "J0", "shelving cutoffs (number, inf, or motifs for the motif thresholds)");
  sq->ov.option<std::size_t>(sq->app, "trajectories", "phase-space trajectories");
  sq->ov.option<double>(sq->app, "t_max", "final time (1/J)");
  sq->ov.option<double>(sq->app, "record_dt", "output spacing");
  sq->ov.option<std::string>(sq->app, "boundary", "open or periodic");
  sq->ov.option<std::uint64_t>(sq->app, "realization", "realization stream index");
  sq->ov.option<std::size_t>(sq->app, "batch", "trajectories integrated together");
  sq->ov.flag(sq->app, "exhaustive", "enumerate all 4^N phase points (small N)");
  sq->ov.flag(sq->app, "single_pair", "two spins at unit separation, exhaustive sampling");
  sq->ov.option<std::vector<double>>(sq->app, "shelved_window",
                                     "pick the first stream whose shelved fraction at the first J0 lies in lo,hi");
  sq->ov.option<bool>(sq->app, "filter", "apply the dimer notch filter (true/false)");

  auto* an = add("analyze", "crossings, collapse, control variates and E_c interpolation on CSV input",
                 {{"eta", 0.0}, {"bootstrap", 1000}, {"double_errors", false}}, cmd_analyze);
  an->ov.option<std::string>(an->app, "task", "crossing | collapse | control-variates | ec");
  an->ov.option<std::string>(an->app, "input", "input CSV");
  an->ov.option<double>(an->app, "eta", "anomalous dimension");
  an->ov.option<double>(an->app, "beta_c", "critical inverse temperature");
  an->ov.option<double>(an->app, "nu", "correlation-length exponent");
  an->ov.option<double>(an->app, "true_mean", "known mean of the control variate");
  an->ov.option<int>(an->app, "bootstrap", "bootstrap replicas");
  an->ov.flag(an->app, "double_errors", "double the bootstrap errors");

  auto* lf = add("local-fields", "local-field statistics of diluted realizations",
                 {{"f", 0.01}, {"L", 200}, {"realizations", 1}, {"boundary", "periodic"}, {"bins", 200}}, cmd_local_fields);
  lf->ov.option<double>(lf->app, "f", "filling fraction");
  lf->ov.option<int>(lf->app, "L", "lattice size");
  lf->ov.option<int>(lf->app, "realizations", "number of realizations");
  lf->ov.option<std::string>(lf->app, "boundary", "open or periodic");
  lf->ov.option<int>(lf->app, "bins", "histogram bins");

  auto* sd = add("strong-disorder", "strong-disorder phase boundary and excitation-energy shift",
                 {{"kappa", 1.0}, {"method", "hypergeometric"}}, cmd_strong_disorder);
  sd->ov.option<std::vector<double>>(sd->app, "f", "filling fractions");
  sd->ov.option<double>(sd->app, "kappa", "self-consistency constant");
  sd->ov.option<double>(sd->app, "anchor_f0", "anchor filling");
  sd->ov.option<double>(sd->app, "anchor_value", "1 - Delta_c at the anchor");
  sd->ov.option<std::string>(sd->app, "method", "hypergeometric | quadrature (delta_Ec table)");
  sd->ov.option<std::vector<double>>(sd->app, "delta", "anisotropies for the delta_Ec table");
  sd->ov.option<std::vector<double>>(sd->app, "h", "fields for the delta_Ec table", "field");

  auto* orc = add("oracle", "exact diagonalization of a small explicit cluster",
                  {{"delta", 0.0}, {"h", 0.0}, {"t_max", 20.0}, {"record_dt", 0.1}, {"J0", "inf"}}, cmd_oracle);
  orc->ov.option<std::string>(orc->app, "task", "quench | thermal | moments");
  orc->ov.option<std::string>(orc->app, "sites", "sites as 'x:y;x:y;...'");
  orc->ov.option<double>(orc->app, "delta", "anisotropy");
  orc->ov.option<double>(orc->app, "h", "transverse field", "field");
  orc->ov.option<std::vector<double>>(orc->app, "beta", "inverse temperatures");
  orc->ov.option<double>(orc->app, "t_max", "final time");
  orc->ov.option<double>(orc->app, "record_dt", "output spacing");
  orc->ov.option<std::string>(orc->app, "J0", "shelving cutoff (number or inf)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json file_cfg = load_config(config_path_from_argv(argc, argv));
    for (auto& s : subs) {
      if (!s->app->parsed()) continue;
      json cfg = s->defaults;
      cfg["out"] = "out";
      for (auto& [k, v] : file_cfg.items())
        if (k != "command") cfg[k] = v;
      global.apply(cfg);
      s->ov.apply(cfg);
      return s->run(cfg);
    }
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
