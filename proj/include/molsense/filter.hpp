#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "molsense/numerics.hpp"
#include "molsense/propagation.hpp"
#include "molsense/sequence.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

// m(t) on one constant step: Re sum_j c_j exp(i w_j (t - t0)).
struct ModulationStep {
  double t0 = 0.0;
  double d = 0.0;
  std::array<cplx, 4> c{};
  std::array<double, 4> w{};
};

struct ModulationTrace {
  double T = 0.0;
  std::vector<ModulationStep> steps;

  double eval(double t) const {
    for (const auto& s : steps) {
      if (t >= s.t0 && t <= s.t0 + s.d) {
        cplx v = 0.0;
        for (int j = 0; j < 4; ++j) v += s.c[j] * std::polar(1.0, s.w[j] * (t - s.t0));
        return v.real();
      }
    }
    throw Error("ModulationTrace::eval: t outside the block");
  }

  // Integral over one block of m(t) exp(i 2 pi nu t).
  cplx fourier(double nu) const {
    const double om = two_pi * nu;
    cplx acc = 0.0;
    for (const auto& s : steps) {
      cplx part = 0.0;
      for (int j = 0; j < 4; ++j) part += s.c[j] * phase_integral(s.w[j] + om, s.d);
      acc += std::polar(1.0, om * s.t0) * part;
    }
    return acc;
  }

  double mean() const { return fourier(0.0).real() / T; }
};

inline ModulationTrace modulation_trace(const Program& prog, double u) {
  const SpinSystem sys = single_electron();
  const ControlOps ops(sys);
  const CMatrix sz = spin_half::sz();
  ModulationTrace tr;
  tr.T = prog.duration;
  CMatrix U = identity(2);
  for (const auto& it : prog.items) {
    if (it.is_rotation) {
      U = ops.rotation(it.rot) * U;
      continue;
    }
    const EigenSystem es = eig_hermitian(ops.hamiltonian(it.step, u), 1e-10);
    const CMatrix a = es.vectors.adjoint() * (U * sz * U.adjoint()) * es.vectors;
    const CMatrix hp = es.vectors.adjoint() * sz * es.vectors;
    ModulationStep ms;
    ms.t0 = it.step.t0;
    ms.d = it.step.duration;
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) {
        ms.c[2 * p + q] = 2.0 * a(q, p) * hp(p, q);  // Tr[S_z^2] = 1/2
        ms.w[2 * p + q] = es.values(p) - es.values(q);
      }
    tr.steps.push_back(ms);
    U = step_propagator(es, it.step.duration) * U;
  }
  return tr;
}

inline ModulationTrace modulation_trace(const Waveform& w, double u) { return modulation_trace(to_program(w), u); }

// m(t) at the midpoint of every dt sample.
inline std::vector<double> modulation_fn(const Waveform& w, double u) {
  const ModulationTrace tr = modulation_trace(w, u);
  std::vector<double> m(w.size());
  std::size_t si = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = w.dt * (static_cast<double>(i) + 0.5);
    while (si + 1 < tr.steps.size() && tr.steps[si].t0 + tr.steps[si].d < t) ++si;
    const auto& s = tr.steps[si];
    cplx v = 0.0;
    for (int j = 0; j < 4; ++j) v += s.c[j] * std::polar(1.0, s.w[j] * (t - s.t0));
    m[i] = v.real();
  }
  return m;
}

inline double lobe_nu(int k, double T) { return 2.0 * (2.0 * k - 1.0) / T; }

inline double lobe_for_nucleus(double nu_nuc, int k) {
  if (k < 1) throw ConfigError("lobe_for_nucleus: k must be >= 1");
  if (!(nu_nuc > 0)) throw ConfigError("lobe_for_nucleus: frequency must be positive");
  return 2.0 * (2.0 * k - 1.0) / nu_nuc;
}

inline constexpr int default_max_lobe = 12;

// Gamma_k = (1/T) int_0^T m(t) cos(2 pi nu_k t) dt.
inline double gamma_k(const ModulationTrace& tr, int k, int k_max = default_max_lobe) {
  if (k < 1 || k > k_max) throw ConfigError("gamma_k: k out of range");
  return tr.fourier(lobe_nu(k, tr.T)).real() / tr.T;
}

// Hard-pulse value of gamma_k by direct quadrature of m(t) sampled on a grid.
inline double gamma_k_samples(const std::vector<double>& m, double dt, int k) {
  const double T = dt * static_cast<double>(m.size());
  const double nu = lobe_nu(k, T);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) acc += m[i] * std::cos(two_pi * nu * dt * (static_cast<double>(i) + 0.5));
  return acc * dt / T;
}

struct Lobe {
  int k = 1;
  double nu = 0.0;
  double gamma = 0.0;
  double gamma_sine = 0.0;  // residual odd part, zero for time-symmetric blocks
};

struct FilterFunction {
  double T = 0.0;
  std::size_t N = 1;
  std::vector<Lobe> lobes;
  std::vector<double> weights;            // Rabi weights, one per trace
  std::vector<double> rabi_u;             // Hz
  std::vector<ModulationTrace> traces;
  double gamma_tail_bound = 0.0;
  bool rabi_averaged = false;

  double gamma(int k) const {
    for (const auto& l : lobes)
      if (l.k == k) return l.gamma;
    throw ConfigError("FilterFunction: lobe not stored");
  }

  cplx block_fourier(double nu) const {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) acc += weights[i] * traces[i].fourier(nu);
    return acc;
  }

  // Integral over N blocks of m(t) exp(i 2 pi nu t).
  cplx Z(double nu) const {
    const cplx step = std::polar(1.0, two_pi * nu * T);
    cplx geo = 0.0, p = 1.0;
    for (std::size_t n = 0; n < N; ++n) {
      geo += p;
      p *= step;
    }
    return block_fourier(nu) * geo;
  }

  // Sum over the stored lobes and their mirror images.
  double zeta(double nu) const {
    const double NT = static_cast<double>(N) * T;
    double z = 0.0;
    for (const auto& l : lobes) z += l.gamma * (sinc(NT * (nu - l.nu)) + sinc(NT * (nu + l.nu)));
    return z;
  }

  FilterFunction with_N(std::size_t n) const {
    FilterFunction f = *this;
    f.N = n;
    return f;
  }
};

inline double zeta_eval(const FilterFunction& f, double nu) { return f.zeta(nu); }

struct FilterOptions {
  int k_max = default_max_lobe;
  double rabi_gate = 0.05;       // relative Gamma_1 spread allowed before averaging
  std::size_t rabi_bins = 7;
  bool force_average = false;
  bool force_center = false;
};

inline std::vector<Lobe> lobes_from(const std::vector<ModulationTrace>& tr, const std::vector<double>& w, int k_max) {
  std::vector<Lobe> out;
  const double T = tr.front().T;
  for (int k = 1; k <= k_max; ++k) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) acc += w[i] * tr[i].fourier(lobe_nu(k, T));
    out.push_back({k, lobe_nu(k, T), acc.real() / T, acc.imag() / T});
  }
  return out;
}

inline FilterFunction make_filter(const Program& block, const RabiDistribution& rabi, std::size_t N,
                                  const FilterOptions& opt = {}) {
  if (N < 1) throw ConfigError("make_filter: N must be >= 1");
  if (opt.k_max < 1) throw ConfigError("make_filter: k_max must be >= 1");
  rabi.validate();
  FilterFunction f;
  f.T = block.duration;
  f.N = N;
  const double uc = rabi.center();
  const ModulationTrace center = modulation_trace(block, uc);
  const RabiDistribution cr = rabi.coarse(opt.rabi_bins);
  std::vector<ModulationTrace> all;
  double spread = 0.0;
  const double g1c = gamma_k(center, 1, opt.k_max);
  for (double u : cr.u) {
    all.push_back(modulation_trace(block, u));
    spread = std::max(spread, std::abs(gamma_k(all.back(), 1, opt.k_max) - g1c) / std::abs(g1c));
  }
  const bool average = !opt.force_center && (opt.force_average || spread > opt.rabi_gate);
  if (average) {
    f.traces = all;
    f.weights = cr.w;
    f.rabi_u = cr.u;
  } else {
    f.traces = {center};
    f.weights = {1.0};
    f.rabi_u = {uc};
  }
  f.rabi_averaged = average;
  f.lobes = lobes_from(f.traces, f.weights, opt.k_max);
  double tail = 0.0;
  for (int k = opt.k_max + 1; k <= 8 * opt.k_max; ++k) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < f.traces.size(); ++i) acc += f.weights[i] * f.traces[i].fourier(lobe_nu(k, f.T));
    tail += std::abs(acc.real() / f.T);
  }
  f.gamma_tail_bound = tail;
  return f;
}

inline FilterFunction make_filter(const Waveform& block, const RabiDistribution& rabi, std::size_t N,
                                  const FilterOptions& opt = {}) {
  return make_filter(to_program(block), rabi, N, opt);
}

inline FilterFunction make_filter(const Waveform& block, double u, std::size_t N, const FilterOptions& opt = {}) {
  return make_filter(to_program(block), RabiDistribution::delta(u), N, opt);
}

// Field spectrum for effective_offset.
struct Sinusoid {
  double amplitude = 0.0;  // T
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad, B = A cos(2 pi f t + phase)
};

struct TabulatedSpectrum {
  std::vector<double> nu;   // Hz, uniform
  std::vector<cplx> B;      // T/Hz, B(t) = int B(nu) exp(i 2 pi nu t) dnu
};

// Effective offset for a sinusoid: delta-function spectrum at +-f.
inline cplx effective_offset(const FilterFunction& f, const Sinusoid& s, double gamma_e) {
  const double NT = static_cast<double>(f.N) * f.T;
  const cplx pos = 0.5 * s.amplitude * std::polar(1.0, s.phase) * std::polar(1.0, pi * NT * s.frequency) * f.zeta(s.frequency);
  const cplx neg = 0.5 * s.amplitude * std::polar(1.0, -s.phase) * std::polar(1.0, -pi * NT * s.frequency) * f.zeta(-s.frequency);
  return gamma_e * (pos + neg);
}

inline cplx effective_offset(const FilterFunction& f, const TabulatedSpectrum& t, double gamma_e) {
  const std::size_t n = t.nu.size();
  if (n < 3 || t.B.size() != n) throw ConfigError("effective_offset: tabulated spectrum too short or ragged");
  const double d = t.nu[1] - t.nu[0];
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(t.nu[i] - t.nu[i - 1] - d) > 1e-6 * std::abs(d)) throw ConfigError("effective_offset: non-uniform grid");
  const double NT = static_cast<double>(f.N) * f.T;
  if (d > 1.0 / (4.0 * NT)) throw ConfigError("effective_offset: spectrum grid too coarse to resolve the lobes");
  const double nu1 = lobe_nu(1, f.T);
  const double lo = nu1 - 2.0 / NT, hi = nu1 + 2.0 / NT;
  const bool pos = t.nu.front() <= lo && t.nu.back() >= hi;
  const bool neg = t.nu.front() <= -hi && t.nu.back() >= -lo;
  if (!pos && !neg) throw ConfigError("effective_offset: spectrum does not cover the first lobe");
  cplx acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wgt = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    acc += wgt * f.zeta(t.nu[i]) * t.B[i] * std::polar(1.0, pi * NT * t.nu[i]);
  }
  return gamma_e * acc * d;
}

// Accumulated phase gamma_e int_0^{NT} m(t) B(t) dt for B = A cos(2 pi nu t + phase).
inline double time_domain_phase(const FilterFunction& f, const Sinusoid& s, double gamma_e) {
  return gamma_e * (s.amplitude * std::polar(1.0, s.phase) * f.Z(s.frequency)).real();
}

inline void export_modulation_csv(const Waveform& w, double u, const std::string& path) {
  const auto m = modulation_fn(w, u);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "t_s,m\n" << std::setprecision(12);
  for (std::size_t i = 0; i < m.size(); ++i) out << w.dt * (static_cast<double>(i) + 0.5) << ',' << m[i] << '\n';
}

}  // namespace molsense
