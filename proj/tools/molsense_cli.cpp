#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "molsense/ac_sensing.hpp"
#include "molsense/aht.hpp"
#include "molsense/brute_sim.hpp"
#include "molsense/filter.hpp"
#include "molsense/io.hpp"
#include "molsense/nuc_sensing.hpp"
#include "molsense/sensitivity.hpp"

using namespace molsense;
namespace fs = std::filesystem;

namespace {

struct GateFailure : Error {
  using Error::Error;
};

enum class Dim { Time, Freq, Field, Current };

// Value with a mandatory unit suffix, converted to SI.
double parse_quantity(const std::string& text, Dim dim) {
  static const std::map<std::string, std::pair<Dim, double>> units = {
      {"s", {Dim::Time, 1.0}},      {"ms", {Dim::Time, 1e-3}},    {"us", {Dim::Time, 1e-6}},
      {"ns", {Dim::Time, 1e-9}},    {"Hz", {Dim::Freq, 1.0}},     {"kHz", {Dim::Freq, 1e3}},
      {"MHz", {Dim::Freq, 1e6}},    {"GHz", {Dim::Freq, 1e9}},    {"T", {Dim::Field, 1.0}},
      {"mT", {Dim::Field, 1e-3}},   {"uT", {Dim::Field, 1e-6}},   {"nT", {Dim::Field, 1e-9}},
      {"A", {Dim::Current, 1.0}},   {"mA", {Dim::Current, 1e-3}}, {"uA", {Dim::Current, 1e-6}}};
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(text, &pos);
  } catch (...) {
    throw ConfigError("cannot parse quantity '" + text + "'");
  }
  std::string unit = text.substr(pos);
  unit.erase(0, unit.find_first_not_of(' '));
  if (unit.empty()) throw ConfigError("quantity '" + text + "' needs a unit suffix");
  auto it = units.find(unit);
  if (it == units.end()) throw ConfigError("unknown unit '" + unit + "' in '" + text + "'");
  if (it->second.first != dim) throw ConfigError("unit '" + unit + "' has the wrong dimension in '" + text + "'");
  return v * it->second.second;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out;
  if (n == 1) return {a};
  for (std::size_t i = 0; i < n; ++i) out.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

struct Common {
  std::string out = "out";
  std::uint64_t seed = 1;
  std::vector<std::string> argv;
};

struct Ctx {
  Common& c;
  Manifest m;

  Ctx(Common& common, const std::string& cmd) : c(common) {
    fs::create_directories(c.out);
    m.command = cmd;
    m.args = c.argv;
    m.seed = c.seed;
    m.constants = frozen_constants(GyroTable{}, AhpSpec{});
  }
  std::string path(const std::string& name) {
    const std::string p = (fs::path(c.out) / name).string();
    m.outputs.push_back(p);
    return p;
  }
  std::string header() const { return "molsense " + m.command + " seed=" + std::to_string(c.seed); }
  void finish() { write_json((fs::path(c.out) / ("manifest_" + m.command + ".json")).string(), m.to_json()); }
};

XyxydParams params_for(const std::string& T_text, const std::string& td_text, const std::string& tf_text, double u,
                       std::size_t N, const AhpSpec& ahp) {
  XyxydParams p;
  p.ahp = ahp;
  p.N = N;
  if (!T_text.empty()) {
    const Retimed r = retime_for_block(parse_quantity(T_text, Dim::Time), ahp, calibration_pair(), u);
    p.tau_d = r.tau_d;
    p.tau_f = r.tau_f;
  } else if (!td_text.empty() && !tf_text.empty()) {
    p.tau_d = parse_quantity(td_text, Dim::Time);
    p.tau_f = parse_quantity(tf_text, Dim::Time);
  } else {
    throw ConfigError("give --T or both --tau-d and --tau-f");
  }
  return p;
}

RabiDistribution rabi_from(const std::string& path, double u_center, Ctx& ctx) {
  if (path.empty()) return RabiDistribution::delta(u_center);
  ctx.m.inputs.push_back(path);
  return load_rabi_csv(path);
}

json lobes_json(const FilterFunction& f) {
  json a = json::array();
  for (const auto& l : f.lobes) a.push_back({{"k", l.k}, {"nu_hz", l.nu}, {"gamma", l.gamma}});
  return a;
}

// ---------------------------------------------------------------------------

struct CalibrateOpts {
  std::string tau_d, u_center = "55MHz", u_min = "40MHz", u_max = "70MHz";
  std::size_t u_points = 31;
  bool ideal = false;
};

void run_calibrate(Common& c, const CalibrateOpts& o) {
  Ctx ctx(c, "calibrate");
  AhpSpec ahp;
  ahp.ideal = o.ideal;
  const double td = parse_quantity(o.tau_d, Dim::Time);
  const double uc = parse_quantity(o.u_center, Dim::Freq);
  const SpinSystem sys = calibration_pair();
  const CalibrationResult cal = calibrate_tau_f(td, ahp, sys, uc);
  const auto ug = linspace(parse_quantity(o.u_min, Dim::Freq), parse_quantity(o.u_max, Dim::Freq), o.u_points);
  const auto prim = primitive_phi_sweep(td, ahp, sys, ug);
  const CMatrix hd = build_dipolar_h(sys);
  CsvWriter w(ctx.path("phi_curve.csv"), {"u_hz", "prim_phi_par", "prim_phi_perp", "block_phi_par", "block_phi_abs"},
              ctx.header());
  double worst = 0.0;
  json par_curve = json::array(), abs_curve = json::array();
  for (std::size_t i = 0; i < ug.size(); ++i) {
    const PhiMetrics b = block_phi(td, cal.tau_f, ahp, sys, ug[i], hd);
    worst = std::max(worst, b.phi_abs);
    w.row({ug[i], prim[i].second.phi_parallel, prim[i].second.phi_perp, b.phi_parallel, b.phi_abs});
    par_curve.push_back({ug[i], prim[i].second.phi_parallel});
    abs_curve.push_back({ug[i], b.phi_abs});
  }
  XyxydParams p;
  p.ahp = ahp;
  p.tau_d = td;
  p.tau_f = cal.tau_f;
  SpinSystem e1 = single_electron();
  e1.offsets = {two_pi * 1e6};
  const PhiMetrics off = block_offset_suppression(make_xyxyd(p), e1, uc);
  const PhiMetrics pc = phi_metrics(avg_h0(primitive_program(0.0, td, ahp), hd, sys, uc), hd);
  json r;
  r["tau_d"] = td;
  r["tau_f"] = cal.tau_f;
  r["t_ahp"] = ahp.t_ahp();
  r["u_center"] = uc;
  r["tau_f_raw"] = cal.tau_f_raw;
  r["T_s"] = block_duration(p);
  r["block_phi_par_center"] = cal.phi_at_snapped;
  r["block_phi_abs_max"] = worst;
  r["block_offset_phi_abs_center"] = off.phi_abs;
  r["primitive_phi_par_center"] = pc.phi_parallel;
  r["primitive_phi_perp_center"] = pc.phi_perp;
  r["phi_parallel_curve"] = par_curve;
  r["phi_abs_block_curve"] = abs_curve;
  write_json(ctx.path("calibration.json"), r);
  ctx.m.results = r;
  ctx.finish();
  std::cout << r.dump(2) << "\n";
}

struct FilterOpts {
  std::string T, tau_d, tau_f, u_center = "55MHz", rabi;
  std::size_t N = 24, nu_points = 4001;
  int k_max = 12;
  double tnu_max = 8.0;
};

void run_filter_report(Common& c, const FilterOpts& o) {
  Ctx ctx(c, "filter-report");
  const double uc = parse_quantity(o.u_center, Dim::Freq);
  const XyxydParams p = params_for(o.T, o.tau_d, o.tau_f, uc, o.N, AhpSpec{});
  const RabiDistribution rabi = rabi_from(o.rabi, uc, ctx);
  FilterOptions fo;
  fo.k_max = o.k_max;
  const Waveform block = make_xyxyd(p);
  const FilterFunction f = make_filter(block, rabi, o.N, fo);
  CsvWriter w(ctx.path("filter.csv"), {"nu_hz", "T_nu", "abs_Z_over_NT", "zeta"}, ctx.header());
  const double NT = static_cast<double>(o.N) * f.T;
  for (double x : linspace(0.0, o.tnu_max, o.nu_points)) {
    const double nu = x / f.T;
    w.row({nu, x, std::abs(f.Z(nu)) / NT, f.zeta(nu)});
  }
  const ModulationTrace tr = modulation_trace(block, rabi.center());
  CsvWriter m(ctx.path("modulation.csv"), {"t_s", "m"}, ctx.header());
  for (double t : linspace(0.0, f.T * (1 - 1e-12), 2001)) m.row({t, tr.eval(t)});
  json r;
  r["T"] = f.T;
  r["N"] = o.N;
  r["tau_d"] = p.tau_d;
  r["tau_f"] = p.tau_f;
  r["rabi_averaged"] = f.rabi_averaged;
  r["lobes"] = lobes_json(f);
  r["gamma_tail_bound"] = f.gamma_tail_bound;
  write_json(ctx.path("filter_report.json"), r);
  ctx.m.results = r;
  ctx.finish();
  std::cout << r.dump(2) << "\n";
}

struct DipOpts {
  std::string T = "1.780us", u_center = "55MHz", i_pk = "14.5uA", b_fwhm, nu_min, nu_max, T_d, route = "time";
  std::size_t N = 24, points = 1201;
  int k = 1;
};

void run_ac_dip(Common& c, const DipOpts& o) {
  Ctx ctx(c, "ac-dip");
  const double uc = parse_quantity(o.u_center, Dim::Freq);
  const XyxydParams p = params_for(o.T, "", "", uc, o.N, AhpSpec{});
  const FilterFunction f = make_filter(make_xyxyd(p), uc, o.N);
  const FieldDistribution d = o.b_fwhm.empty() ? drive_field_distribution(parse_quantity(o.i_pk, Dim::Current))
                                               : FieldDistribution::gaussian(0.0, parse_quantity(o.b_fwhm, Dim::Field));
  const double nuk = lobe_nu(o.k, f.T);
  const double w = 1.0 / (static_cast<double>(o.N) * f.T);
  const double lo = o.nu_min.empty() ? nuk - 4 * w : parse_quantity(o.nu_min, Dim::Freq);
  const double hi = o.nu_max.empty() ? nuk + 4 * w : parse_quantity(o.nu_max, Dim::Freq);
  const double Td = o.T_d.empty() ? INFINITY : parse_quantity(o.T_d, Dim::Time);
  const GyroTable g;
  const auto curve = spectral_dip(linspace(lo, hi, o.points), f, d, Td, g.gamma_e,
                                  o.route == "sum" ? DipRoute::FilterSum : DipRoute::TimeDomain);
  CsvWriter cw(ctx.path("dip.csv"), {"nu_m_hz", "C_I", "C_Q"}, ctx.header());
  for (const auto& pt : curve) cw.row({pt.nu, pt.ci, pt.cq});
  const DipShape s = dip_shape(curve);
  json r;
  r["T_s"] = f.T;
  r["N"] = o.N;
  r["lobe_nu_hz"] = nuk;
  r["b_rms_T"] = d.b_rms();
  r["dip_center_hz"] = s.center;
  r["dip_depth"] = s.depth;
  r["dip_fwhm_hz"] = s.fwhm;
  write_json(ctx.path("dip.json"), r);
  ctx.m.results = r;
  ctx.finish();
  std::cout << r.dump(2) << "\n";
}

struct InvertOpts {
  std::string samples, b_fwhm = "730nT", T = "1.780us", u_center = "55MHz";
  std::size_t N = 24, points = 64;
  double kappa_span = 6.0;
};

void run_ac_invert(Common& c, const InvertOpts& o) {
  Ctx ctx(c, "ac-invert");
  std::vector<QuadratureSample> s;
  if (!o.samples.empty()) {
    ctx.m.inputs.push_back(o.samples);
    std::istringstream in(read_file(o.samples));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      QuadratureSample q;
      if (!(ls >> q.kappa >> q.ci >> q.cq)) {
        if (first) {
          first = false;
          continue;
        }
        throw ConfigError(o.samples + ": malformed row '" + line + "'");
      }
      first = false;
      s.push_back(q);
    }
  } else {
    const FieldDistribution d = FieldDistribution::gaussian(0.0, parse_quantity(o.b_fwhm, Dim::Field));
    const double kmax = o.kappa_span / d.b_rms();
    for (double k : linspace(0.0, kmax, o.points)) {
      const cplx ch = characteristic(d, k);
      s.push_back({k, ch.real(), ch.imag()});
    }
  }
  const InversionResult r = invert_distribution(s);
  CsvWriter w(ctx.path("field_distribution.csv"), {"B_T", "p"}, ctx.header());
  for (std::size_t i = 0; i < r.dist.grid.size(); ++i) w.row({r.dist.grid[i], r.dist.p[i]});
  json j;
  j["samples"] = s.size();
  j["b_rms_T"] = r.b_rms;
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

struct CorrOpts {
  std::string T = "1.780us", u_center = "55MHz", fs = "3kHz", T_d;
  std::vector<std::string> tones;
  std::size_t N = 24, points = 512;
};

std::vector<Tone> parse_tones(const std::vector<std::string>& spec) {
  std::vector<Tone> out;
  for (const auto& s : spec) {
    const auto parts = [&] {
      std::vector<std::string> v;
      std::stringstream ss(s);
      std::string x;
      while (std::getline(ss, x, ':')) v.push_back(x);
      return v;
    }();
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("tone '" + s + "' must be freq:b_rms[:phase_rad]");
    Tone t;
    t.frequency = parse_quantity(parts[0], Dim::Freq);
    t.b_rms = parse_quantity(parts[1], Dim::Field);
    if (parts.size() == 3) t.phase = std::stod(parts[2]);
    out.push_back(t);
  }
  return out;
}

void run_ac_corrspec(Common& c, const CorrOpts& o) {
  Ctx ctx(c, "ac-corrspec");
  const double uc = parse_quantity(o.u_center, Dim::Freq);
  const XyxydParams p = params_for(o.T, "", "", uc, o.N, AhpSpec{});
  const FilterFunction f = make_filter(make_xyxyd(p), uc, o.N);
  std::vector<Tone> tones = parse_tones(o.tones);
  if (tones.empty())
    for (int i = 0; i < 4; ++i) tones.push_back({1.12287e6 + 300.0 * i, 5e-9, 0.0});
  const ToneSet ts = first_lobe_tones(f, tones);
  const double fs_ = parse_quantity(o.fs, Dim::Freq);
  std::vector<double> tg;
  for (std::size_t i = 0; i < o.points; ++i) tg.push_back(static_cast<double>(i) / fs_);
  const double Td = o.T_d.empty() ? INFINITY : parse_quantity(o.T_d, Dim::Time);
  const double sep = static_cast<double>(o.N) * f.T + 2 * p.t_ahp();
  const CorrSpecResult r = corr_spec_signal(ts, f, tg, Td, GyroTable{}.gamma_e, sep);
  CsvWriter w(ctx.path("correlation.csv"), {"t_s", "C"}, ctx.header());
  for (std::size_t i = 0; i < r.t.size(); ++i) w.row({r.t[i], r.C[i]});
  const Periodogram pg = psd(r.C, fs_);
  CsvWriter pw(ctx.path("psd.csv"), {"f_hz", "psd"}, ctx.header());
  for (std::size_t i = 0; i < pg.f.size(); ++i) pw.row({pg.f[i], pg.psd[i]});
  json j;
  json al = json::array();
  for (const auto& t : tones)
    al.push_back({{"f_hz", t.frequency},
                  {"alias_real_hz", alias_map(t.frequency, fs_, AliasConvention::Real)},
                  {"alias_complex_hz", alias_map(t.frequency, fs_, AliasConvention::Complex)}});
  j["aliases"] = al;
  json peaks = json::array();
  for (auto i : psd_peaks(pg, tones.size())) peaks.push_back(pg.f[i]);
  j["psd_peaks_hz"] = peaks;
  const AliasReport rr = alias_injectivity(ts.lobe_lo, ts.lobe_hi, fs_, AliasConvention::Real);
  const AliasReport rc = alias_injectivity(ts.lobe_lo, ts.lobe_hi, fs_, AliasConvention::Complex);
  j["band_hz"] = {ts.lobe_lo, ts.lobe_hi};
  j["real_injective"] = rr.injective;
  j["real_fold_hz"] = rr.fold_frequency;
  j["complex_injective"] = rc.injective;
  j["max_block_phase_rad"] = r.max_block_phase;
  j["small_phase"] = r.small_phase;
  write_json(ctx.path("corrspec.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

struct EnsOpts {
  std::string config = "data/ensemble.json";
  std::vector<std::string> species{"H1", "C13"};
  std::string T_min = "1.50us", T_max = "1.95us", T_step = "1ns";
  std::size_t N = 24;
  std::vector<std::size_t> Ns;
  std::string T = "1.780us", fs = "4MHz", bulk_fwhm = "20kHz";
  double Gamma = 0.34;
  std::size_t points = 1024;
  bool seed_set = false;
};

EnsembleConfig load_ensemble(Ctx& ctx, const EnsOpts& o) {
  ctx.m.inputs.push_back(o.config);
  EnsembleConfig cfg = load_ensemble_config(o.config, &ctx.m.inputs);
  if (o.seed_set) cfg.seed = ctx.c.seed;
  ctx.c.seed = cfg.seed;
  ctx.m.seed = cfg.seed;
  return cfg;
}

void run_nuc_tsweep(Common& c, const EnsOpts& o) {
  Ctx ctx(c, "nuc-tsweep");
  const EnsembleConfig cfg = load_ensemble(ctx, o);
  std::vector<Species> sp;
  for (const auto& s : o.species) sp.push_back(parse_species(s));
  const double a = parse_quantity(o.T_min, Dim::Time), b = parse_quantity(o.T_max, Dim::Time),
               st = parse_quantity(o.T_step, Dim::Time);
  std::vector<double> Tg;
  for (long i = 0; a + st * static_cast<double>(i) <= b * (1 + 1e-12); ++i) Tg.push_back(a + st * static_cast<double>(i));
  const TSweepResult r = t_sweep(cfg, Tg, o.N, sp);
  CsvWriter w(ctx.path("tsweep.csv"), {"T_s", "T_seq_s", "tau_d_s", "tau_f_s", "signal"}, ctx.header());
  std::vector<double> y;
  for (const auto& p : r.points) {
    w.row({p.T, p.T_seq, p.tau_d, p.tau_f, p.signal});
    y.push_back(p.signal);
  }
  json j;
  json dips = json::array();
  for (auto i : sweep_dips(y, 2 * sp.size() + 1, 0.01)) dips.push_back({{"T_s", refine_minimum(Tg, y, i)}, {"signal", y[i]}});
  j["dips"] = dips;
  j["resolution_warning"] = r.resolution_warning;
  if (r.resolution_warning) std::cerr << "warning: T step too coarse to resolve a lobe\n";
  write_json(ctx.path("tsweep.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

void run_nuc_nsweep(Common& c, const EnsOpts& o) {
  Ctx ctx(c, "nuc-nsweep");
  const EnsembleConfig cfg = load_ensemble(ctx, o);
  std::vector<std::size_t> Ns = o.Ns;
  if (Ns.empty())
    for (std::size_t n = 1; n <= cfg.n_max_criterion; ++n) Ns.push_back(n);
  json j = json::object();
  for (const auto& s : o.species) {
    const Species sp = parse_species(s);
    const NSweepResult r = n_sweep(cfg, sp, Ns);
    CsvWriter w(ctx.path("nsweep_" + species_name(sp) + ".csv"), {"N", "signal"}, ctx.header());
    for (std::size_t i = 0; i < r.N.size(); ++i) w.row({static_cast<double>(r.N[i]), r.signal[i]});
    j[species_name(sp)] = {{"T_s", r.T},
                           {"plateau", r.plateau},
                           {"coupled_fraction", r.coupled_fraction},
                           {"ci95_halfwidth", r.ci_halfwidth},
                           {"draws", r.draws}};
  }
  write_json(ctx.path("nsweep.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

void run_nuc_corrspec(Common& c, const EnsOpts& o) {
  Ctx ctx(c, "nuc-corrspec");
  const EnsembleConfig cfg = load_ensemble(ctx, o);
  const Species sp = parse_species(o.species.front());
  const double nu = cfg.gyro.nu(sp);
  const XyxydParams p = sequence_for_T(lobe_for_nucleus(nu, cfg.lobe(sp)), cfg.ahp, cfg.u_center(), o.N);
  const FilterFunction f = make_filter(make_xyxyd(p), cfg.rabi, o.N);
  const double fs_ = parse_quantity(o.fs, Dim::Freq);
  std::vector<double> tg;
  for (std::size_t i = 0; i < o.points; ++i) tg.push_back(static_cast<double>(i) / fs_);
  const double sep = static_cast<double>(o.N) * f.T + 2 * p.t_ahp();
  std::vector<double> C(tg.size(), 0.0), bulk(tg.size(), 0.0);
  const auto dirs = fibonacci_sphere(cfg.n_orient);
  double max_phase = 0.0;
  for (const auto& b : dirs) {
    NuclearBath bath = site_couplings(cfg, sp, b);
    const NucCorrResult r = nuc_corr_spec(bath, f, tg, cfg.T_d, sep);
    max_phase = std::max(max_phase, r.max_block_phase);
    for (auto& s : bath.sites) s.hf.A0 = 0.0;
    const NucCorrResult r0 = nuc_corr_spec(bath, f, tg, cfg.T_d, sep);
    for (std::size_t i = 0; i < tg.size(); ++i) {
      C[i] += r.C[i] / static_cast<double>(dirs.size());
      bulk[i] += r0.C[i] / static_cast<double>(dirs.size());
    }
  }
  CsvWriter w(ctx.path("nuc_correlation.csv"), {"t_s", "C", "C_no_hyperfine"}, ctx.header());
  for (std::size_t i = 0; i < tg.size(); ++i) w.row({tg[i], C[i], bulk[i]});
  const Periodogram pg = psd(C, fs_), pb = psd(bulk, fs_);
  const double alias = alias_map(nu, fs_);
  const double bw = parse_quantity(o.bulk_fwhm, Dim::Freq);
  CsvWriter pw(ctx.path("nuc_psd.csv"), {"f_hz", "psd", "psd_no_hyperfine", "bulk_reference"}, ctx.header());
  for (std::size_t i = 0; i < pg.f.size(); ++i) pw.row({pg.f[i], pg.psd[i], pb.psd[i], gaussian_line(pg.f[i], alias, bw)});
  json j;
  j["species"] = species_name(sp);
  j["T_s"] = f.T;
  j["alias_hz"] = alias;
  j["fwhm_hz"] = peak_fwhm(pg);
  j["fwhm_no_hyperfine_hz"] = peak_fwhm(pb);
  j["max_block_phase_rad"] = max_phase;
  write_json(ctx.path("nuc_corrspec.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

void run_fraction_map(Common& c, const EnsOpts& o) {
  Ctx ctx(c, "fraction-map");
  const EnsembleConfig cfg = load_ensemble(ctx, o);
  json j = json::object();
  for (const auto& s : o.species) {
    const Species sp = parse_species(s);
    const FractionMap m = signal_fraction_map(cfg, sp, o.N, parse_quantity(o.T, Dim::Time), o.Gamma);
    CsvWriter w(ctx.path("fraction_map_" + species_name(sp) + ".csv"), {"site_index", "element", "fraction"}, ctx.header());
    for (std::size_t i = 0; i < m.fraction.size(); ++i)
      w.raw(std::to_string(m.site_index[i]) + "," + m.element + "," + fmt_num(m.fraction[i]));
    j[species_name(sp)] = {{"sites", m.fraction.size()}, {"set90", m.set90}, {"excluded", m.excluded}};
  }
  write_json(ctx.path("fraction_map.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

struct OracleOpts {
  std::string check = "all";
  std::size_t baths = 10;
};

void run_oracle(Common& c, const OracleOpts& o) {
  Ctx ctx(c, "oracle");
  json j = json::object();
  bool ok = true;
  const bool all = o.check == "all";
  auto record = [&](const std::string& name, bool pass, json detail) {
    detail["pass"] = pass;
    j[name] = detail;
    ok = ok && pass;
  };
  bool ran = false;
  if (all || o.check == "table1") {
    ran = true;
    const double rows[][3] = {{200, 95, 1.717}, {400, 192, 2.903}, {565, 278, 3.913}, {800, 395, 5.317}, {1600, 795, 10.117}};
    double worst = 0;
    for (auto& r : rows) worst = std::max(worst, std::abs(block_duration(r[0] * 1e-9, r[1] * 1e-9, 67e-9) - r[2] * 1e-6));
    record("table1", worst <= 6e-9, {{"max_residual_s", worst}, {"row_1311_T_s", block_duration(1311e-9, 560e-9, 67e-9)}});
  }
  if (all || o.check == "ideal-primitive") {
    ran = true;
    AhpSpec a;
    a.ideal = true;
    const SpinSystem s = calibration_pair();
    const CMatrix hd = build_dipolar_h(s);
    const PhiMetrics m = phi_metrics(avg_h0(primitive_program(0.0, 800e-9, a), hd, s, 55e6), hd);
    record("ideal_primitive", std::abs(m.phi_parallel + 0.5) < 1e-6 && m.phi_perp < 1e-6,
           {{"phi_par", m.phi_parallel}, {"phi_perp", m.phi_perp}});
  }
  if (all || o.check == "hardpulse-gamma") {
    ran = true;
    AhpSpec a;
    a.ideal = true;
    XyxydParams p;
    p.ahp = a;
    p.tau_d = 400e-9;
    p.tau_f = 200e-9;
    const Waveform w = make_xyxyd(p);
    const ModulationTrace tr = modulation_trace(w, 55e6);
    const auto m = modulation_fn(w, 55e6);
    double worst = 0;
    json g = json::array();
    for (int k = 1; k <= 5; ++k) {
      const double exact = gamma_k(tr, k), quad = gamma_k_samples(m, w.dt, k);
      worst = std::max(worst, std::abs(exact - quad));
      g.push_back({{"k", k}, {"gamma", exact}, {"quadrature", quad}});
    }
    record("hardpulse_gamma", worst < 1e-3, {{"lobes", g}, {"max_abs_diff", worst}});
  }
  if (all || o.check == "echo") {
    ran = true;
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double nu = GyroTable{}.nu(Species::H1);
    const XyxydParams p = sequence_for_T(lobe_for_nucleus(nu, 6), AhpSpec{}, 55e6, 16);
    const FilterFunction f = make_filter(make_xyxyd(p), 55e6, p.N);
    double worst = 0;
    for (std::size_t d = 0; d < o.baths; ++d) {
      std::vector<NucleusSpec> ns;
      NuclearBath bath;
      for (int l = 0; l < 2; ++l) {
        NucleusSpec n;
        n.species = Species::H1;
        n.A_aniso = two_pi * (20e3 + 180e3 * U(rng));
        n.A_iso = two_pi * (-30e3 + 60e3 * U(rng));
        n.theta = pi * U(rng);
        ns.push_back(n);
        bath.sites.push_back({static_cast<std::size_t>(l), n, hyperfine_secular(n), nu, false});
      }
      const double b = brute_echo(ns, {two_pi * nu, two_pi * nu}, p, 55e6);
      const double e = echo_factor(bath, f);
      worst = std::max(worst, std::abs(e - b) / std::abs(b));
    }
    record("echo", worst < 0.02, {{"baths", o.baths}, {"max_rel_err", worst}});
  }
  if (!ran) throw ConfigError("unknown oracle check '" + o.check + "'");
  write_json(ctx.path("oracle.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
  if (!ok) throw GateFailure("oracle gate failed");
}

struct SenseOpts {
  std::string kind = "bmin", budget = "data/budget.json";
  std::string nsr_min = "0.1Hz", nsr_max = "1000Hz", tau_min = "1s", tau_max = "10000s";
  std::size_t nsr_points = 30, tau_points = 30;
};

void run_sense_map(Common& c, const SenseOpts& o) {
  Ctx ctx(c, "sense-map");
  ctx.m.inputs.push_back(o.budget);
  const BudgetConfig bc = load_budget_config(o.budget);
  const ThresholdKind kind = parse_threshold_kind(o.kind);
  auto nsr = log_grid(parse_quantity(o.nsr_min, Dim::Freq), parse_quantity(o.nsr_max, Dim::Freq), o.nsr_points);
  const double R_ref = bandwidth_R(bc.readout) * bc.readout.N_s;
  for (double ref : {25.0, 62.0})
    if (ref >= nsr.front() && ref <= nsr.back()) nsr.push_back(ref);
  std::sort(nsr.begin(), nsr.end());
  nsr.erase(std::unique(nsr.begin(), nsr.end()), nsr.end());
  const auto tac = log_grid(parse_quantity(o.tau_min, Dim::Time), parse_quantity(o.tau_max, Dim::Time), o.tau_points);
  const SensitivityMap m = sensitivity_map(kind, nsr, tac, bc.budget, bc.noise);
  CsvWriter w(ctx.path("sense_map.csv"), {"NsR_hz", "tau_acq_s", "threshold", "feasible"}, ctx.header());
  std::size_t masked = 0;
  for (std::size_t i = 0; i < nsr.size(); ++i)
    for (std::size_t k = 0; k < tac.size(); ++k) {
      const auto& cell = m.cells[i][k];
      const bool feas = cell.feasible && !m.masked[i][k];
      masked += m.masked[i][k];
      w.row({nsr[i], tac[k], feas ? cell.value : NAN, feas ? 1.0 : 0.0});
    }
  json j;
  j["kind"] = o.kind;
  j["threshold_unit"] = kind == ThresholdKind::BMin ? "T" : "rad/s";
  j["readout_NsR_hz"] = R_ref;
  j["masked_cells"] = masked;
  json refs = json::array();
  for (double ref : {25.0, 62.0}) {
    const ThresholdResult t = threshold(kind, ref, 60.0, bc.budget, bc.noise);
    json e = {{"NsR_hz", ref}, {"tau_acq_s", 60.0}, {"feasible", t.feasible}, {"threshold", t.value},
              {"N", t.N},      {"tau0_s", t.tau0},  {"taum_s", t.taum}};
    if (kind == ThresholdKind::A1Min && t.feasible) e["r_max_m"] = rmax_from_a1min(t.value);
    refs.push_back(e);
  }
  j["reference_points"] = refs;
  write_json(ctx.path("sense_map.json"), j);
  ctx.m.results = j;
  ctx.finish();
  std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molsense: molecular-spin sensing toolkit"};
  app.require_subcommand(1);
  Common common;
  for (int i = 1; i < argc; ++i) common.argv.emplace_back(argv[i]);
  app.add_option("--out", common.out, "output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", common.seed, "random seed")->capture_default_str();

  CalibrateOpts co;
  auto* cal = app.add_subcommand("calibrate", "calibrate tau_f for a given tau_d");
  cal->add_option("--tau-d", co.tau_d, "drive time, e.g. 800ns")->required();
  cal->add_option("--u-center", co.u_center)->capture_default_str();
  cal->add_option("--u-min", co.u_min)->capture_default_str();
  cal->add_option("--u-max", co.u_max)->capture_default_str();
  cal->add_option("--u-points", co.u_points)->capture_default_str();
  cal->add_flag("--ideal-ahp", co.ideal);

  FilterOpts fo;
  auto* fr = app.add_subcommand("filter-report", "filter-function lobes and spectrum");
  fr->add_option("--T", fo.T, "block duration, e.g. 1.780us");
  fr->add_option("--tau-d", fo.tau_d);
  fr->add_option("--tau-f", fo.tau_f);
  fr->add_option("--N", fo.N)->capture_default_str();
  fr->add_option("--u-center", fo.u_center)->capture_default_str();
  fr->add_option("--rabi", fo.rabi, "Rabi distribution CSV");
  fr->add_option("--k-max", fo.k_max)->capture_default_str();
  fr->add_option("--nu-points", fo.nu_points)->capture_default_str();

  DipOpts dop;
  auto* dip = app.add_subcommand("ac-dip", "spectral dip of C_I against drive frequency");
  dip->add_option("--T", dop.T)->capture_default_str();
  dip->add_option("--N", dop.N)->capture_default_str();
  dip->add_option("--k", dop.k)->capture_default_str();
  dip->add_option("--i-pk", dop.i_pk, "drive current amplitude")->capture_default_str();
  dip->add_option("--b-fwhm", dop.b_fwhm, "field distribution FWHM (overrides --i-pk)");
  dip->add_option("--nu-min", dop.nu_min);
  dip->add_option("--nu-max", dop.nu_max);
  dip->add_option("--points", dop.points)->capture_default_str();
  dip->add_option("--T-d", dop.T_d);
  dip->add_option("--route", dop.route)->check(CLI::IsMember({"time", "sum"}))->capture_default_str();

  InvertOpts io;
  auto* inv = app.add_subcommand("ac-invert", "recover p(B) from quadrature samples");
  inv->add_option("--samples", io.samples, "CSV kappa_rad_T,CI,CQ");
  inv->add_option("--b-fwhm", io.b_fwhm, "synthetic Gaussian when no samples")->capture_default_str();
  inv->add_option("--points", io.points)->capture_default_str();

  CorrOpts cop;
  auto* acs = app.add_subcommand("ac-corrspec", "undersampled correlation spectroscopy of tones");
  acs->add_option("--T", cop.T)->capture_default_str();
  acs->add_option("--N", cop.N)->capture_default_str();
  acs->add_option("--fs", cop.fs)->capture_default_str();
  acs->add_option("--points", cop.points)->capture_default_str();
  acs->add_option("--tone", cop.tones, "freq:b_rms[:phase], repeatable");
  acs->add_option("--T-d", cop.T_d);

  EnsOpts eo;
  auto ens_common = [&](CLI::App* s) {
    s->add_option("--config", eo.config)->capture_default_str();
    s->add_option("--species", eo.species)->delimiter(',');
    s->add_option("--N", eo.N)->capture_default_str();
  };
  auto* ts = app.add_subcommand("nuc-tsweep", "echo against block duration");
  ens_common(ts);
  ts->add_option("--T-min", eo.T_min)->capture_default_str();
  ts->add_option("--T-max", eo.T_max)->capture_default_str();
  ts->add_option("--T-step", eo.T_step)->capture_default_str();
  auto* ns = app.add_subcommand("nuc-nsweep", "echo against repetition count");
  ens_common(ns);
  ns->add_option("--N-list", eo.Ns)->delimiter(',');
  auto* ncs = app.add_subcommand("nuc-corrspec", "nuclear correlation spectrum");
  ens_common(ncs);
  ncs->add_option("--fs", eo.fs)->capture_default_str();
  ncs->add_option("--points", eo.points)->capture_default_str();
  ncs->add_option("--bulk-fwhm", eo.bulk_fwhm)->capture_default_str();
  auto* fm = app.add_subcommand("fraction-map", "per-site signal fractions");
  ens_common(fm);
  fm->add_option("--T", eo.T)->capture_default_str();
  fm->add_option("--Gamma", eo.Gamma)->capture_default_str();

  OracleOpts oo;
  auto* orc = app.add_subcommand("oracle", "run oracle validations");
  orc->add_option("--check", oo.check)
      ->check(CLI::IsMember({"all", "table1", "ideal-primitive", "hardpulse-gamma", "echo"}))
      ->capture_default_str();
  orc->add_option("--baths", oo.baths)->capture_default_str();

  SenseOpts so;
  auto* sm = app.add_subcommand("sense-map", "threshold map over NsR and acquisition time");
  sm->add_option("--kind", so.kind)->check(CLI::IsMember({"bmin", "a1min"}))->capture_default_str();
  sm->add_option("--budget", so.budget)->capture_default_str();
  sm->add_option("--nsr-min", so.nsr_min)->capture_default_str();
  sm->add_option("--nsr-max", so.nsr_max)->capture_default_str();
  sm->add_option("--nsr-points", so.nsr_points)->capture_default_str();
  sm->add_option("--tau-acq-min", so.tau_min)->capture_default_str();
  sm->add_option("--tau-acq-max", so.tau_max)->capture_default_str();
  sm->add_option("--tau-acq-points", so.tau_points)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  eo.seed_set = seed_opt->count() > 0;
  try {
    if (cal->parsed()) run_calibrate(common, co);
    if (fr->parsed()) run_filter_report(common, fo);
    if (dip->parsed()) run_ac_dip(common, dop);
    if (inv->parsed()) run_ac_invert(common, io);
    if (acs->parsed()) run_ac_corrspec(common, cop);
    if (ts->parsed()) run_nuc_tsweep(common, eo);
    if (ns->parsed()) run_nuc_nsweep(common, eo);
    if (ncs->parsed()) run_nuc_corrspec(common, eo);
    if (fm->parsed()) run_fraction_map(common, eo);
    if (orc->parsed()) run_oracle(common, oo);
    if (sm->parsed()) run_sense_map(common, so);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const GateFailure& e) {
    std::cerr << "gate failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
