#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "molsense/aht.hpp"
#include "molsense/brute_sim.hpp"
#include "molsense/filter.hpp"
#include "molsense/sequence.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

struct BathSite {
  std::size_t site_index = 0;
  NucleusSpec spec;
  Hyperfine hf;
  double nu = 0.0;  // Larmor, Hz
  bool strong = false;
};

struct NuclearBath {
  std::vector<BathSite> sites;
};

// Strong if |A0| or |A1| exceeds fraction * 2 pi u_center.
inline bool is_strong(const Hyperfine& hf, double u_center, double fraction = 0.3) {
  const double thr = fraction * two_pi * u_center;
  return std::abs(hf.A0) > thr || std::abs(hf.A1) > thr;
}

// Weak-coupling echo product with zeta at each nucleus' Larmor frequency.
inline double echo_factor(const NuclearBath& bath, const FilterFunction& f) {
  const double NT = static_cast<double>(f.N) * f.T;
  double e = 1.0;
  for (const auto& s : bath.sites) e *= std::cos(NT * f.zeta(s.nu) * s.hf.A1 / 2.0);
  return e;
}

// Weak-coupling validity of the effective model for one site.
inline bool weak_valid(const BathSite& s, double NTzeta, double u_center, double fraction = 0.3) {
  return std::abs(s.hf.A1) * std::max(1.0, std::abs(NTzeta)) / 2.0 <= fraction * two_pi * u_center &&
         !is_strong(s.hf, u_center, fraction);
}

// Weak-coupling product for valid sites; others are propagated exactly with the given sequence.
inline double echo_factor_routed(const NuclearBath& bath, const FilterFunction& f, const XyxydParams& p, double u_center,
                                 double fraction = 0.3) {
  const double NT = static_cast<double>(f.N) * f.T;
  double e = 1.0;
  XyxydParams q = p;
  q.N = f.N;
  for (const auto& s : bath.sites) {
    const double z = f.zeta(s.nu);
    if (weak_valid(s, NT * z, u_center, fraction))
      e *= std::cos(NT * z * s.hf.A1 / 2.0);
    else
      e *= brute_echo({s.spec}, {two_pi * s.nu}, q, u_center);
  }
  return e;
}

// Low-discrepancy directions on the unit sphere.
inline std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  if (n < 1) throw ConfigError("fibonacci_sphere: n must be >= 1");
  std::vector<Vec3> out;
  const double ga = pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double ph = ga * static_cast<double>(i);
    out.emplace_back(r * std::cos(ph), r * std::sin(ph), z);
  }
  return out;
}

inline std::vector<Vec3> random_sphere(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 2.0 * U(rng) - 1.0;
    const double ph = two_pi * U(rng);
    const double r = std::sqrt(1.0 - z * z);
    out.emplace_back(r * std::cos(ph), r * std::sin(ph), z);
  }
  return out;
}

inline double orientation_average(const std::function<double(const Vec3&)>& f, std::size_t n) {
  if (n < 1) throw ConfigError("orientation_average: n_samples must be >= 1");
  double acc = 0.0;
  for (const auto& b : fibonacci_sphere(n)) acc += f(b);
  return acc / static_cast<double>(n);
}

inline double orientation_average(const std::function<double(const Vec3&, double)>& f, std::size_t n,
                                  const RabiDistribution& rabi) {
  rabi.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < rabi.u.size(); ++i) {
    const double u = rabi.u[i];
    acc += rabi.w[i] * orientation_average([&](const Vec3& b) { return f(b, u); }, n);
  }
  return acc;
}

struct EnsembleConfig {
  MoleculeGeometry molecule;
  std::vector<HyperfineEntry> carbon_table;  // by carbon index in file order
  GyroTable gyro;
  AhpSpec ahp;
  RabiDistribution rabi = RabiDistribution::delta(55e6);
  double occupancy_H = 1.0;
  double occupancy_C = 0.01;
  double strong_fraction = 0.3;
  std::size_t n_orient = 64;
  std::size_t rabi_bins = 5;
  std::size_t n_draws = 4000;
  std::uint64_t seed = 1;
  std::size_t n_max_criterion = 48;
  double coupled_threshold = 0.9;
  double T_d = INFINITY;
  int lobe_H = 6;
  int lobe_C = 2;

  double u_center() const { return rabi.center(); }
  double occupancy(Species s) const { return s == Species::H1 ? occupancy_H : occupancy_C; }
  int lobe(Species s) const { return s == Species::H1 ? lobe_H : lobe_C; }
};

// Couplings of every site of one species for static field direction b (molecule frame).
inline NuclearBath site_couplings(const EnsembleConfig& cfg, Species sp, const Vec3& b) {
  NuclearBath bath;
  const auto pos = cfg.molecule.relative_positions(species_element(sp));
  std::map<std::size_t, const HyperfineEntry*> table;
  if (sp == Species::C13)
    for (const auto& e : cfg.carbon_table) table[e.site_index] = &e;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    NucleusSpec n;
    auto it = table.find(i);
    if (it != table.end()) {
      n.species = sp;
      n.A_iso = it->second->A_iso;
      n.A_aniso = it->second->A_aniso;
      n.theta = std::acos(std::clamp(pos[i].normalized().dot(b.normalized()), -1.0, 1.0));
    } else {
      n = point_dipole_nucleus(pos[i], b, cfg.gyro, sp);
    }
    BathSite s;
    s.site_index = i;
    s.spec = n;
    s.hf = hyperfine_secular(n);
    s.nu = cfg.gyro.nu(sp);
    s.strong = is_strong(s.hf, cfg.u_center(), cfg.strong_fraction);
    bath.sites.push_back(s);
  }
  return bath;
}

// XYXYd timing for a requested block duration, nulling dipolar Phi at the Rabi center.
inline XyxydParams sequence_for_T(double T, const AhpSpec& ahp, double u_center, std::size_t N = 1) {
  const Retimed r = retime_for_block(T, ahp, calibration_pair(), u_center);
  XyxydParams p;
  p.ahp = ahp;
  p.tau_d = r.tau_d;
  p.tau_f = r.tau_f;
  p.N = N;
  return p;
}

// Same lobe weights, lobe centers moved to block duration T.
inline FilterFunction rescaled(const FilterFunction& f, double T) {
  FilterFunction g = f;
  g.T = T;
  for (auto& l : g.lobes) l.nu = lobe_nu(l.k, T);
  return g;
}

// Brute-force echo of single strong sites, cached per (site, orientation).
class StrongSiteCache {
 public:
  StrongSiteCache(const XyxydParams& p, double u) : p_(p), u_(u), bare_(single_electron(), p, u) {}

  double echo(std::size_t site, std::size_t orient, const BathSite& s, std::size_t N) {
    auto key = std::make_pair(site, orient);
    auto it = engines_.find(key);
    if (it == engines_.end()) {
      auto eng = std::make_unique<EchoEngine>(electron_with_bath({s.spec}, {two_pi * s.nu}), p_, u_);
      it = engines_.emplace(key, std::move(eng)).first;
    }
    return it->second->correlation_at(N) / bare_.correlation_at(N);
  }

 private:
  XyxydParams p_;
  double u_;
  EchoEngine bare_;
  std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<EchoEngine>> engines_;
};

struct TSweepPoint {
  double T = 0.0;        // requested
  double T_seq = 0.0;    // realized on the grid
  double tau_d = 0.0, tau_f = 0.0;
  double signal = 0.0;
};

struct TSweepResult {
  std::vector<TSweepPoint> points;
  bool resolution_warning = false;
};

// Ensemble echo against block duration. Lobe weights come from the nearest grid-realizable
// sequence; lobe centers follow the requested T. Strong 13C sites use brute echoes frozen at the
// sweep's reference sequence.
inline TSweepResult t_sweep(const EnsembleConfig& cfg, const std::vector<double>& T_grid, std::size_t N,
                            const std::vector<Species>& species) {
  if (T_grid.size() < 2) throw ConfigError("t_sweep: T grid needs at least two points");
  TSweepResult res;
  const double dT = std::abs(T_grid[1] - T_grid[0]);
  for (Species sp : species) {
    const double nu = cfg.gyro.nu(sp);
    const double T = T_grid[T_grid.size() / 2];
    const double lobe_width_T = T / (static_cast<double>(N) * T * nu);  // ~ 1/(N nu)
    if (dT > 0.5 * lobe_width_T) res.resolution_warning = true;
  }
  const RabiDistribution rb = cfg.rabi.coarse(cfg.rabi_bins);
  const auto dirs = fibonacci_sphere(cfg.n_orient);
  std::vector<std::vector<NuclearBath>> baths(species.size());
  for (std::size_t s = 0; s < species.size(); ++s)
    for (const auto& b : dirs) baths[s].push_back(site_couplings(cfg, species[s], b));

  // strong-site factors frozen at the reference sequence
  const XyxydParams ref = sequence_for_T(T_grid[T_grid.size() / 2], cfg.ahp, cfg.u_center(), N);
  std::unique_ptr<StrongSiteCache> strong;
  std::vector<std::vector<double>> strong_factor(species.size(), std::vector<double>(dirs.size(), 1.0));
  for (std::size_t s = 0; s < species.size(); ++s) {
    const double p = cfg.occupancy(species[s]);
    for (std::size_t o = 0; o < dirs.size(); ++o)
      for (const auto& site : baths[s][o].sites)
        if (site.strong && p > 0) {
          if (!strong) strong = std::make_unique<StrongSiteCache>(ref, cfg.u_center());
          strong_factor[s][o] *= (1.0 - p) + p * strong->echo(site.site_index, o, site, N);
        }
  }

  std::map<std::pair<long, long>, std::vector<FilterFunction>> cache;
  for (double T : T_grid) {
    const XyxydParams p = sequence_for_T(T, cfg.ahp, cfg.u_center(), N);
    const auto key = std::make_pair(std::lround(p.tau_d / p.dt()), std::lround(p.tau_f / p.dt()));
    auto it = cache.find(key);
    if (it == cache.end()) {
      const Program block = to_program(make_xyxyd(p));
      std::vector<FilterFunction> fs;
      FilterOptions o;
      o.force_center = true;
      for (double u : rb.u) fs.push_back(make_filter(block, RabiDistribution::delta(u), N, o));
      it = cache.emplace(key, std::move(fs)).first;
    }
    TSweepPoint pt;
    pt.T = T;
    pt.T_seq = block_duration(p);
    pt.tau_d = p.tau_d;
    pt.tau_f = p.tau_f;
    const double NT = static_cast<double>(N) * T;
    double sig = 0.0;
    for (std::size_t iu = 0; iu < rb.u.size(); ++iu) {
      const FilterFunction f = rescaled(it->second[iu], T);
      double acc = 0.0;
      for (std::size_t o = 0; o < dirs.size(); ++o) {
        double v = 1.0;
        for (std::size_t s = 0; s < species.size(); ++s) {
          const double occ = cfg.occupancy(species[s]);
          for (const auto& site : baths[s][o].sites) {
            if (site.strong) continue;
            const double c = std::cos(NT * f.zeta(site.nu) * site.hf.A1 / 2.0);
            v *= (1.0 - occ) + occ * c;
          }
          v *= strong_factor[s][o];
        }
        acc += v;
      }
      sig += rb.w[iu] * acc / static_cast<double>(dirs.size());
    }
    if (std::isfinite(cfg.T_d)) sig *= std::exp(-NT / cfg.T_d);
    pt.signal = sig;
    res.points.push_back(pt);
  }
  return res;
}

// Prominent local minima of a sweep, deepest first.
inline std::vector<std::size_t> sweep_dips(const std::vector<double>& y, std::size_t count, double min_prominence = 0.0) {
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    if (!(y[i] < y[i - 1] && y[i] <= y[i + 1])) continue;
    double lmax = y[i], rmax = y[i];
    for (std::size_t j = i; j-- > 0;) {
      if (y[j] < y[i]) break;
      lmax = std::max(lmax, y[j]);
    }
    for (std::size_t j = i + 1; j < y.size(); ++j) {
      if (y[j] < y[i]) break;
      rmax = std::max(rmax, y[j]);
    }
    const double prom = std::min(lmax, rmax) - y[i];
    if (prom > min_prominence) cand.emplace_back(prom, i);
  }
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < cand.size() && k < count; ++k) out.push_back(cand[k].second);
  return out;
}

// Sub-grid minimum location by parabola through the three points around index i.
inline double refine_minimum(const std::vector<double>& x, const std::vector<double>& y, std::size_t i) {
  if (i == 0 || i + 1 >= y.size()) return x[i];
  const double den = y[i - 1] - 2 * y[i] + y[i + 1];
  if (!(den > 0)) return x[i];
  return x[i] + 0.5 * (y[i - 1] - y[i + 1]) / den * (x[i + 1] - x[i]);
}

struct NSweepResult {
  std::vector<std::size_t> N;
  std::vector<double> signal;
  double plateau = 0.0;
  double coupled_fraction = 0.0;
  double ci_halfwidth = 0.0;  // 95% normal approximation
  std::size_t draws = 0;
  double T = 0.0;
};

// Monte-Carlo over isotope occupancy and orientation. A draw counts as coupled if it holds a
// strong site or if the weak-site product at n_max_criterion falls below coupled_threshold.
inline NSweepResult n_sweep(const EnsembleConfig& cfg, Species sp, const std::vector<std::size_t>& Ns,
                            double max_ci_halfwidth = 1.0) {
  if (Ns.empty()) throw ConfigError("n_sweep: empty N grid");
  const double nu = cfg.gyro.nu(sp);
  const double T_req = lobe_for_nucleus(nu, cfg.lobe(sp));
  const XyxydParams p = sequence_for_T(T_req, cfg.ahp, cfg.u_center(), 1);
  const Waveform block = make_xyxyd(p);
  const FilterFunction f1 = make_filter(block, cfg.rabi, 1);
  const double T = f1.T;
  const double occ = cfg.occupancy(sp);
  const auto dirs = fibonacci_sphere(cfg.n_orient);
  std::vector<NuclearBath> baths;
  for (const auto& b : dirs) baths.push_back(site_couplings(cfg, sp, b));
  std::unique_ptr<StrongSiteCache> strong;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, dirs.size() - 1);

  NSweepResult r;
  r.N = Ns;
  r.T = T;
  r.signal.assign(Ns.size(), 0.0);
  std::size_t coupled = 0;
  for (std::size_t d = 0; d < cfg.n_draws; ++d) {
    const std::size_t o = pick(rng);
    std::vector<const BathSite*> occupied;
    for (const auto& s : baths[o].sites)
      if (U(rng) < occ) occupied.push_back(&s);
    bool has_strong = false;
    double crit = 1.0;
    const double NmaxT = static_cast<double>(cfg.n_max_criterion) * T;
    for (const auto* s : occupied) {
      if (s->strong) {
        has_strong = true;
      } else {
        crit *= std::cos(NmaxT * f1.zeta(s->nu) * s->hf.A1 / 2.0);
      }
    }
    if (has_strong || crit < cfg.coupled_threshold) ++coupled;
    for (std::size_t k = 0; k < Ns.size(); ++k) {
      const double NT = static_cast<double>(Ns[k]) * T;
      double v = 1.0;
      for (const auto* s : occupied) {
        if (s->strong) {
          if (!strong) strong = std::make_unique<StrongSiteCache>(p, cfg.u_center());
          v *= strong->echo(s->site_index, o, *s, Ns[k]);
        } else {
          v *= std::cos(NT * f1.zeta(s->nu) * s->hf.A1 / 2.0);
        }
      }
      if (std::isfinite(cfg.T_d)) v *= std::exp(-NT / cfg.T_d);
      r.signal[k] += v;
    }
  }
  const double n = static_cast<double>(cfg.n_draws);
  for (double& v : r.signal) v /= n;
  r.draws = cfg.n_draws;
  r.coupled_fraction = static_cast<double>(coupled) / n;
  r.plateau = 1.0 - r.coupled_fraction;
  r.ci_halfwidth = 1.96 * std::sqrt(r.plateau * (1.0 - r.plateau) / n);
  if (r.ci_halfwidth > max_ci_halfwidth)
    throw Error("n_sweep: " + std::to_string(cfg.n_draws) + " draws give CI half-width " + std::to_string(r.ci_halfwidth));
  return r;
}

struct NucCorrResult {
  std::vector<double> t;
  std::vector<double> C;
  double max_block_phase = 0.0;
  bool small_phase = true;
};

// Weak-coupling correlation spectrum. Normalization sin^2(NT zeta A1/2) -> (NT zeta A1)^2/4 at t = 0; `separation` is added
// to t in the carrier to reference it to the interval between block starts.
inline NucCorrResult nuc_corr_spec(const NuclearBath& bath, const FilterFunction& f, const std::vector<double>& t_grid,
                                   double T_d = INFINITY, double separation = 0.0) {
  const double NT = static_cast<double>(f.N) * f.T;
  const double env = std::isfinite(T_d) ? std::exp(-2.0 * NT / T_d) : 1.0;
  NucCorrResult r;
  std::vector<double> w;
  for (const auto& s : bath.sites) {
    const double ph = s.strong ? 0.0 : NT * f.zeta(s.nu) * s.hf.A1;
    w.push_back(ph * ph / 4.0);
    r.max_block_phase = std::max(r.max_block_phase, std::abs(ph));
  }
  r.small_phase = r.max_block_phase < 0.5;
  for (double t : t_grid) {
    double c = 0.0;
    for (std::size_t l = 0; l < bath.sites.size(); ++l) {
      const auto& s = bath.sites[l];
      c += w[l] * std::cos(t * s.hf.A0 / 2.0) * std::cos(two_pi * s.nu * (t + separation));
    }
    r.t.push_back(t);
    r.C.push_back(env * c);
  }
  return r;
}

// Gaussian bulk reference line, unit peak.
inline double gaussian_line(double f, double center, double fwhm) {
  const double s = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  return std::exp(-0.5 * (f - center) * (f - center) / (s * s));
}

struct FractionMap {
  std::vector<std::size_t> site_index;
  std::string element;
  std::vector<double> raw;       // N^2 T^2 Gamma^2 <A1^2> occupancy, rad^2
  std::vector<double> fraction;
  std::size_t set90 = 0;         // minimal number of sites covering 90%
  std::vector<std::size_t> excluded;
};

inline FractionMap signal_fraction_map(const EnsembleConfig& cfg, Species sp, std::size_t N, double T, double Gamma) {
  const auto dirs = fibonacci_sphere(cfg.n_orient);
  FractionMap m;
  m.element = species_element(sp);
  const double pref = static_cast<double>(N) * static_cast<double>(N) * T * T * Gamma * Gamma;
  std::vector<double> acc;
  std::vector<std::size_t> strong_count;
  for (const auto& b : dirs) {
    const NuclearBath bath = site_couplings(cfg, sp, b);
    if (acc.empty()) {
      acc.assign(bath.sites.size(), 0.0);
      strong_count.assign(bath.sites.size(), 0);
    }
    for (std::size_t i = 0; i < bath.sites.size(); ++i) {
      if (bath.sites[i].strong) {
        ++strong_count[i];
        continue;
      }
      acc[i] += bath.sites[i].hf.A1 * bath.sites[i].hf.A1;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    m.site_index.push_back(i);
    const double v = pref * cfg.occupancy(sp) * acc[i] / static_cast<double>(dirs.size());
    m.raw.push_back(v);
    total += v;
    if (strong_count[i] == dirs.size()) m.excluded.push_back(i);
  }
  if (!(total > 0)) throw Error("signal_fraction_map: no contributing sites");
  for (double v : m.raw) m.fraction.push_back(v / total);
  std::vector<double> sorted = m.fraction;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double c = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    c += sorted[i];
    if (c >= 0.9 - 1e-12) {
      m.set90 = i + 1;
      break;
    }
  }
  return m;
}

}  // namespace molsense
