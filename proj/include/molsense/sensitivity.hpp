#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "molsense/numerics.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

// Electron moment magnitude used for the readout bandwidth.
inline constexpr double electron_moment = 0.5 * codata::g_e * codata::mu_B;

struct ReadoutParams {
  double mu = electron_moment;  // J/T
  double D_duty = 0.98;
  double G_rms = 1.6e5;         // T/m
  double S_F = 2.4e-18 * 2.4e-18;  // N^2/Hz
  double N_s = 1.0;

  void validate() const {
    if (!(mu > 0 && D_duty > 0 && D_duty <= 1 && G_rms > 0 && S_F > 0 && N_s > 0))
      throw ConfigError("ReadoutParams: all fields must be positive and D_duty <= 1");
  }
};

// Per-spin force-noise equivalent bandwidth, Hz.
inline double bandwidth_R(const ReadoutParams& p) {
  p.validate();
  return p.mu * p.mu * p.D_duty * p.D_duty * p.G_rms * p.G_rms / (2.0 * p.S_F);
}

struct NoiseModel {
  std::string id = "default";
  std::map<std::string, double> params{{"c_force", 1.0}, {"spin_var", 2.0}};
  std::function<double(const NoiseModel&, double, double, double)> eval;

  double operator()(double NsR, double tau0, double taum) const {
    if (!(NsR > 0 && tau0 > 0 && taum > 0)) throw ConfigError("sigma: arguments must be positive");
    if (eval) return eval(*this, NsR, tau0, taum);
    const double sm2 = params.at("c_force") / (NsR * tau0);
    const double spin = params.at("spin_var") * tau0 / std::min(tau0, taum);
    return std::sqrt(spin + 2.0 * sm2 + sm2 * sm2);
  }
};

inline double sigma(const NoiseModel& nm, double NsR, double tau0, double taum) { return nm(NsR, tau0, taum); }

struct SenseBudget {
  double T = 1.780e-6;
  double Gamma = 0.34;
  double T_d = 104e-6;
  double tau_ovh = 2e-3;
  double tau_m_max = 68e-3;
  double tau0_min = 1e-3;
  double tau0_max = 10.0;
  std::size_t N_min = 1;
  std::size_t N_max = 0;  // 0: ceil(5 T_d / T)
  double gamma_e = two_pi * 28.025e9;
  std::size_t tau0_points = 2000;
  std::size_t taum_points = 24;

  std::size_t n_max() const {
    return N_max ? N_max : static_cast<std::size_t>(std::ceil(5.0 * T_d / T));
  }
  void validate() const {
    if (!(T > 0 && Gamma > 0 && T_d > 0 && tau_ovh >= 0 && tau_m_max > 0))
      throw ConfigError("SenseBudget: T, Gamma, T_d, tau_m_max must be positive");
    if (!(tau0_min > 0 && tau0_max >= tau0_min)) throw ConfigError("SenseBudget: empty tau0 bounds");
    if (N_min < 1 || n_max() < N_min) throw ConfigError("SenseBudget: empty N bounds");
    if (tau0_points < 1 || taum_points < 1) throw ConfigError("SenseBudget: grid sizes must be >= 1");
  }
};

inline double snr_ac(double B, double tau0, double taum, std::size_t N, const SenseBudget& b, const NoiseModel& nm,
                     double NsR, double tau_acq) {
  const double NT = static_cast<double>(N) * b.T;
  return std::sin(NT * b.Gamma * b.gamma_e * B) * std::exp(-NT / b.T_d) / nm(NsR, tau0, taum) *
         std::sqrt(tau_acq / (NT + tau0 + b.tau_ovh));
}

inline double snr_nuc(double A1, double tau0, double taum, std::size_t N, const SenseBudget& b, const NoiseModel& nm,
                      double NsR, double tau_acq) {
  const double NT = static_cast<double>(N) * b.T;
  const double s = std::sin(NT * b.Gamma * A1 / 2.0);
  return s * s * std::exp(-2.0 * NT / b.T_d) / nm(NsR, tau0, taum) *
         std::sqrt(tau_acq / (2.0 * NT + tau0 + b.tau_ovh));
}

inline double rmax_from_a1min(double A1_min, const GyroTable& g = {}) {
  if (!(A1_min > 0)) throw ConfigError("rmax_from_a1min: A1_min must be positive");
  return std::cbrt(3.0 * codata::mu0 * codata::hbar * g.gamma_H * g.gamma_e / (8.0 * pi * A1_min));
}

inline double a1_from_rmax(double r, const GyroTable& g = {}) {
  return 3.0 * codata::mu0 * codata::hbar * g.gamma_H * g.gamma_e / (8.0 * pi * r * r * r);
}

enum class ThresholdKind { BMin, A1Min };

inline ThresholdKind parse_threshold_kind(const std::string& s) {
  if (s == "bmin" || s == "B_min") return ThresholdKind::BMin;
  if (s == "a1min" || s == "A1_min" || s == "rmax") return ThresholdKind::A1Min;
  throw ConfigError("unknown threshold kind '" + s + "'");
}

struct ThresholdResult {
  bool feasible = false;
  double value = 0.0;  // T or rad/s
  double tau0 = 0.0, taum = 0.0;
  std::size_t N = 0;
  double snr = 0.0;
  double snr0 = 0.0;  // best bare accumulated SNR
};

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g;
  if (n == 1 || lo == hi) return {hi};
  for (std::size_t i = 0; i < n; ++i)
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1)));
  g.back() = hi;
  return g;
}

namespace detail {

struct InnerTable {
  std::vector<double> tau0, sig, taum;  // per tau0: best sigma over taum, and its taum
};

inline InnerTable inner_table(const SenseBudget& b, const NoiseModel& nm, double NsR) {
  InnerTable t;
  t.tau0 = log_grid(b.tau0_min, b.tau0_max, b.tau0_points);
  const auto tm = log_grid(std::min(b.tau0_min, b.tau_m_max), b.tau_m_max, b.taum_points);
  for (double t0 : t.tau0) {
    double best = std::numeric_limits<double>::infinity(), arg = tm.back();
    for (double m : tm) {
      const double s = nm(NsR, t0, m);
      if (s < best) best = s, arg = m;
    }
    t.sig.push_back(best);
    t.taum.push_back(arg);
  }
  return t;
}

}  // namespace detail

// Nested optimization: SNR(x) = max over N of signal(x, N) * h(N), with h(N) the best rate/sigma over
// (tau0, taum). Signal phase is clipped at pi/2 so SNR is monotone in x; bisection then finds SNR = 1.
inline ThresholdResult threshold(ThresholdKind kind, double NsR, double tau_acq, const SenseBudget& b,
                                 const NoiseModel& nm) {
  b.validate();
  if (!(NsR > 0 && tau_acq > 0)) throw ConfigError("threshold: NsR and tau_acq must be positive");
  const auto tab = detail::inner_table(b, nm, NsR);
  const std::size_t nmax = b.n_max();
  const double ovh_mult = kind == ThresholdKind::BMin ? 1.0 : 2.0;
  std::vector<double> h(nmax + 1, 0.0);
  std::vector<std::size_t> arg(nmax + 1, 0);
  ThresholdResult r;
  for (std::size_t i = 0; i < tab.tau0.size(); ++i)
    r.snr0 = std::max(r.snr0, std::sqrt(tau_acq / (tab.tau0[i] + b.tau_ovh)) / tab.sig[i]);
  for (std::size_t N = b.N_min; N <= nmax; ++N) {
    const double NT = static_cast<double>(N) * b.T;
    for (std::size_t i = 0; i < tab.tau0.size(); ++i) {
      const double v = std::sqrt(tau_acq / (ovh_mult * NT + tab.tau0[i] + b.tau_ovh)) / tab.sig[i];
      if (v > h[N]) h[N] = v, arg[N] = i;
    }
  }
  auto phase = [&](double x, std::size_t N) {
    const double NT = static_cast<double>(N) * b.T;
    return kind == ThresholdKind::BMin ? NT * b.Gamma * b.gamma_e * x : NT * b.Gamma * x / 2.0;
  };
  auto best = [&](double x, std::size_t* Nopt) {
    double m = 0.0;
    for (std::size_t N = b.N_min; N <= nmax; ++N) {
      const double NT = static_cast<double>(N) * b.T;
      const double s = std::sin(std::min(phase(x, N), pi / 2));
      const double v = kind == ThresholdKind::BMin ? s * std::exp(-NT / b.T_d) * h[N]
                                                    : s * s * std::exp(-2.0 * NT / b.T_d) * h[N];
      if (v > m) {
        m = v;
        if (Nopt) *Nopt = N;
      }
    }
    return m;
  };
  // bracket fixed by the budget: at x_hi every N has phase >= pi/2
  const double x_hi = kind == ThresholdKind::BMin ? (pi / 2) / (static_cast<double>(b.N_min) * b.T * b.Gamma * b.gamma_e)
                                                  : pi / (static_cast<double>(b.N_min) * b.T * b.Gamma);
  if (best(x_hi, nullptr) < 1.0) return r;
  double lo = 0.0, hi = x_hi;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (best(mid, nullptr) >= 1.0 ? hi : lo) = mid;
  }
  r.feasible = true;
  r.value = hi;
  r.snr = best(hi, &r.N);
  r.tau0 = tab.tau0[arg[r.N]];
  r.taum = tab.taum[arg[r.N]];
  return r;
}

struct SensitivityMap {
  ThresholdKind kind = ThresholdKind::BMin;
  std::vector<double> NsR, tau_acq;
  std::vector<std::vector<ThresholdResult>> cells;  // [NsR][tau_acq]
  std::vector<std::vector<bool>> masked;            // bare SNR below 1
};

inline SensitivityMap sensitivity_map(ThresholdKind kind, const std::vector<double>& NsR,
                                      const std::vector<double>& tau_acq, const SenseBudget& b, const NoiseModel& nm) {
  if (NsR.empty() || tau_acq.empty()) throw ConfigError("sensitivity_map: grids must be nonempty");
  SensitivityMap m;
  m.kind = kind;
  m.NsR = NsR;
  m.tau_acq = tau_acq;
  std::vector<std::future<std::vector<ThresholdResult>>> rows;
  for (double r : NsR)
    rows.push_back(std::async(std::launch::async, [=, &b, &nm] {
      std::vector<ThresholdResult> row;
      for (double t : tau_acq) row.push_back(threshold(kind, r, t, b, nm));
      return row;
    }));
  for (auto& f : rows) {
    m.cells.push_back(f.get());
    std::vector<bool> mk;
    for (const auto& c : m.cells.back()) mk.push_back(c.snr0 < 1.0);
    m.masked.push_back(mk);
  }
  return m;
}

}  // namespace molsense
