#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "molsense/filter.hpp"
#include "molsense/numerics.hpp"

namespace molsense {

struct FieldDistribution {
  std::vector<double> grid;  // T, uniform
  std::vector<double> p;

  void validate() const {
    if (grid.empty() || grid.size() != p.size()) throw ConfigError("FieldDistribution: empty or ragged");
    double s = 0.0;
    for (double x : p) {
      if (x < 0) throw ConfigError("FieldDistribution: negative weight");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("FieldDistribution: weights do not sum to 1");
    if (grid.size() > 2) {
      const double d = grid[1] - grid[0];
      for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - grid[i - 1] - d) > 1e-9 * std::abs(d)) throw ConfigError("FieldDistribution: non-uniform grid");
    }
  }

  double spacing() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }

  // Sample-averaged RMS field, mean |B| / sqrt 2.
  double b_rms() const {
    double m = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * std::abs(grid[i]);
    return m / std::sqrt(2.0);
  }

  static FieldDistribution delta(double B) { return {{B}, {1.0}}; }

  static FieldDistribution gaussian(double mean, double fwhm, std::size_t n = 801, double span_sigmas = 8.0) {
    if (n < 3 || !(fwhm > 0)) throw ConfigError("FieldDistribution::gaussian: bad arguments");
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    FieldDistribution d;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = mean - span_sigmas * sigma + 2.0 * span_sigmas * sigma * static_cast<double>(i) / static_cast<double>(n - 1);
      const double v = std::exp(-0.5 * (b - mean) * (b - mean) / (sigma * sigma));
      d.grid.push_back(b);
      d.p.push_back(v);
      s += v;
    }
    for (double& v : d.p) v /= s;
    return d;
  }

  FieldDistribution scaled(double f) const {
    FieldDistribution d = *this;
    for (double& b : d.grid) b *= f;
    return d;
  }
};

// Zero-mean Gaussian with FWHM 210 nT per microampere of drive current.
inline FieldDistribution drive_field_distribution(double i_pk_amps, double fwhm_per_amp = 210e-9 / 1e-6) {
  return FieldDistribution::gaussian(0.0, fwhm_per_amp * i_pk_amps);
}

// Characteristic function sum_B p exp(i kappa B).
inline cplx characteristic(const FieldDistribution& d, double kappa) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < d.p.size(); ++i) acc += d.p[i] * std::polar(1.0, kappa * d.grid[i]);
  return acc;
}

inline std::pair<double, double> ci_cq(const FieldDistribution& d, std::size_t N, double T, double Gamma, double T_d,
                                       double gamma_e) {
  d.validate();
  const double NT = static_cast<double>(N) * T;
  if (!(NT > 0)) throw ConfigError("ci_cq: NT must be positive");
  const double env = std::isfinite(T_d) ? std::exp(-NT / T_d) : 1.0;
  const cplx c = characteristic(d, NT * gamma_e * Gamma);
  return {env * c.real(), env * c.imag()};
}

struct QuadratureSample {
  double kappa = 0.0;  // rad/T
  double ci = 0.0;
  double cq = 0.0;
};

struct InversionResult {
  FieldDistribution dist;
  double b_rms = 0.0;
};

// Fourier inversion over a uniform kappa grid starting at 0, using C(-kappa) = conj C(kappa).
inline InversionResult invert_distribution(const std::vector<QuadratureSample>& s, std::optional<std::vector<double>> b_grid = {}) {
  if (s.size() < 4) throw ConfigError("invert_distribution: need at least 4 samples");
  const double dk = s[1].kappa - s[0].kappa;
  if (!(dk > 0)) throw ConfigError("invert_distribution: kappa must increase");
  if (std::abs(s[0].kappa) > 1e-9 * dk) throw ConfigError("invert_distribution: kappa grid must start at 0");
  for (std::size_t i = 1; i < s.size(); ++i)
    if (std::abs(s[i].kappa - s[i - 1].kappa - dk) > 1e-6 * dk) throw ConfigError("invert_distribution: non-uniform kappa grid");
  const double b_nyq = pi / dk;
  std::vector<double> grid;
  if (b_grid) {
    grid = *b_grid;
    for (double b : grid)
      if (std::abs(b) > b_nyq) throw ConfigError("invert_distribution: B range exceeds Nyquist coverage");
  } else {
    const std::size_t n = 2 * s.size() + 1;
    for (std::size_t i = 0; i < n; ++i) grid.push_back(-b_nyq + 2.0 * b_nyq * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  InversionResult r;
  r.dist.grid = grid;
  double total = 0.0;
  for (double b : grid) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double w = (i == 0 || i + 1 == s.size()) ? 0.5 : 1.0;
      acc += w * (cplx(s[i].ci, s[i].cq) * std::polar(1.0, -s[i].kappa * b)).real();
    }
    const double v = std::max(0.0, acc);
    r.dist.p.push_back(v);
    total += v;
  }
  if (!(total > 0)) throw Error("invert_distribution: reconstructed distribution vanishes");
  for (double& v : r.dist.p) v /= total;
  r.b_rms = r.dist.b_rms();
  return r;
}

enum class DipRoute { FilterSum, TimeDomain };

struct DipPoint {
  double nu = 0.0;
  double ci = 0.0;
  double cq = 0.0;
};

// C_I, C_Q against drive frequency for B = B cos(2 pi nu t) switched on at the block start.
inline std::vector<DipPoint> spectral_dip(const std::vector<double>& nu_grid, const FilterFunction& f,
                                          const FieldDistribution& d, double T_d, double gamma_e,
                                          DipRoute route = DipRoute::TimeDomain) {
  d.validate();
  const double NT = static_cast<double>(f.N) * f.T;
  const double env = std::isfinite(T_d) ? std::exp(-NT / T_d) : 1.0;
  std::vector<DipPoint> out;
  out.reserve(nu_grid.size());
  for (double nu : nu_grid) {
    double k;
    if (route == DipRoute::TimeDomain) {
      k = gamma_e * f.Z(nu).real();
    } else {
      k = gamma_e * NT * std::cos(pi * NT * nu) * f.zeta(nu);
    }
    const cplx c = characteristic(d, k);
    out.push_back({nu, env * c.real(), env * c.imag()});
  }
  return out;
}

struct DipShape {
  double center = 0.0;
  double depth = 0.0;
  double fwhm = 0.0;
};

// Minimum of C_I and full width at half depth, baseline taken as the curve maximum.
inline DipShape dip_shape(const std::vector<DipPoint>& c) {
  if (c.size() < 3) throw ConfigError("dip_shape: curve too short");
  std::size_t im = 0;
  double base = c[0].ci;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i].ci < c[im].ci) im = i;
    base = std::max(base, c[i].ci);
  }
  DipShape s;
  s.center = c[im].nu;
  if (im > 0 && im + 1 < c.size()) {
    const double y0 = c[im - 1].ci, y1 = c[im].ci, y2 = c[im + 1].ci;
    const double den = y0 - 2 * y1 + y2;
    if (den > 0) s.center = c[im].nu + 0.5 * (y0 - y2) / den * (c[im + 1].nu - c[im].nu);
  }
  s.depth = base - c[im].ci;
  const double half = c[im].ci + 0.5 * s.depth;
  double left = c.front().nu, right = c.back().nu;
  for (std::size_t i = im; i > 0; --i)
    if (c[i - 1].ci >= half) {
      left = c[i - 1].nu + (half - c[i - 1].ci) / (c[i].ci - c[i - 1].ci) * (c[i].nu - c[i - 1].nu);
      break;
    }
  for (std::size_t i = im; i + 1 < c.size(); ++i)
    if (c[i + 1].ci >= half) {
      right = c[i].nu + (half - c[i].ci) / (c[i + 1].ci - c[i].ci) * (c[i + 1].nu - c[i].nu);
      break;
    }
  s.fwhm = right - left;
  return s;
}

struct Tone {
  double frequency = 0.0;  // Hz
  double b_rms = 0.0;      // T
  double phase = 0.0;      // rad
};

struct ToneSet {
  std::vector<Tone> tones;
  double lobe_lo = 0.0, lobe_hi = 0.0;  // Hz, declared lobe window

  void validate() const {
    for (const auto& t : tones)
      if (t.frequency < lobe_lo || t.frequency > lobe_hi) throw ConfigError("ToneSet: tone outside declared lobe");
  }
};

inline ToneSet first_lobe_tones(const FilterFunction& f, const std::vector<Tone>& t) {
  const double w = 1.0 / (static_cast<double>(f.N) * f.T);
  ToneSet s{t, lobe_nu(1, f.T) - w, lobe_nu(1, f.T) + w};
  s.validate();
  return s;
}

struct CorrSpecResult {
  std::vector<double> t;
  std::vector<double> C;
  double max_block_phase = 0.0;  // rad
  bool small_phase = true;
};

// Two-block correlation for tones with random phase per shot. `separation` is added to t to
// give the interval between block starts. Normalization: C(0) of one tone is (gamma_e |Z| B_amp)^2/2.
inline CorrSpecResult corr_spec_signal(const ToneSet& tones, const FilterFunction& f, const std::vector<double>& t_grid,
                                       double T_d, double gamma_e, double separation = 0.0) {
  tones.validate();
  const double NT = static_cast<double>(f.N) * f.T;
  const double env = std::isfinite(T_d) ? std::exp(-2.0 * NT / T_d) : 1.0;
  std::vector<double> amp2;
  CorrSpecResult r;
  double sum_a = 0.0;
  for (const auto& tn : tones.tones) {
    const double a = gamma_e * std::sqrt(2.0) * tn.b_rms * std::abs(f.Z(tn.frequency));
    amp2.push_back(a * a);
    sum_a += a;
  }
  r.max_block_phase = sum_a;
  r.small_phase = sum_a < 0.5;
  for (double t : t_grid) {
    double c = 0.0;
    for (std::size_t n = 0; n < amp2.size(); ++n) c += 0.5 * amp2[n] * std::cos(two_pi * tones.tones[n].frequency * (t + separation));
    r.t.push_back(t);
    r.C.push_back(env * c);
  }
  return r;
}

enum class AliasConvention { Real, Complex };

inline double alias_map(double f, double fs, AliasConvention c = AliasConvention::Real) {
  if (!(fs > 0)) throw ConfigError("alias_map: fs must be positive");
  if (c == AliasConvention::Real) return std::abs(f - std::round(f / fs) * fs);
  double r = std::fmod(f, fs);
  if (r < 0) r += fs;
  return r;
}

struct AliasReport {
  bool injective = true;
  std::vector<std::pair<double, double>> collisions;  // pairs of band frequencies sharing an alias
  double fold_frequency = 0.0;                        // first fold edge inside the band, if any
};

inline AliasReport alias_injectivity(double f_lo, double f_hi, double fs, AliasConvention c, std::size_t probes = 64) {
  if (!(f_hi > f_lo)) throw ConfigError("alias_injectivity: empty band");
  AliasReport r;
  const double edge = c == AliasConvention::Real ? fs / 2 : fs;
  const double first = std::floor(f_lo / edge) + 1.0;
  const double e = first * edge;
  if (c == AliasConvention::Real) {
    if (e < f_hi) {
      r.injective = false;
      r.fold_frequency = e;
      const double span = std::min(e - f_lo, f_hi - e);
      for (std::size_t i = 1; i <= probes; ++i) {
        const double d = span * static_cast<double>(i) / static_cast<double>(probes + 1);
        r.collisions.emplace_back(e - d, e + d);
      }
    }
  } else if (f_hi - f_lo >= fs) {
    r.injective = false;
    r.fold_frequency = f_lo + fs;
    r.collisions.emplace_back(f_lo, f_lo + fs);
  }
  return r;
}

struct Periodogram {
  std::vector<double> f;
  std::vector<double> psd;
};

struct PsdOptions {
  std::size_t zero_pad = 1;  // transform length multiplier
  bool hann = false;
};

inline std::vector<double> window_weights(std::size_t n, bool hann) {
  std::vector<double> w(n, 1.0);
  if (hann && n > 1)
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(i) / static_cast<double>(n - 1));
  return w;
}

// |DFT|^2 of real samples, bins 0..M/2.
inline Periodogram psd(const std::vector<double>& x, double fs, const PsdOptions& o = {}) {
  if (!(fs > 0) || x.empty() || o.zero_pad < 1) throw ConfigError("psd: bad arguments");
  const std::size_t m = x.size() * o.zero_pad;
  const auto w = window_weights(x.size(), o.hann);
  std::vector<double> in(m, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) in[i] = x[i] * w[i];
  std::vector<fftw_complex> out(m / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(m), in.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  Periodogram p;
  for (std::size_t k = 0; k <= m / 2; ++k) {
    p.f.push_back(fs * static_cast<double>(k) / static_cast<double>(m));
    p.psd.push_back(out[k][0] * out[k][0] + out[k][1] * out[k][1]);
  }
  return p;
}

// |DFT|^2 of complex samples, bins 0..M-1 mapped to [0, fs).
inline Periodogram psd(const std::vector<cplx>& x, double fs, const PsdOptions& o = {}) {
  if (!(fs > 0) || x.empty() || o.zero_pad < 1) throw ConfigError("psd: bad arguments");
  const std::size_t m = x.size() * o.zero_pad;
  const auto w = window_weights(x.size(), o.hann);
  std::vector<fftw_complex> in(m), out(m);
  for (std::size_t i = 0; i < m; ++i) in[i][0] = in[i][1] = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    in[i][0] = x[i].real() * w[i];
    in[i][1] = x[i].imag() * w[i];
  }
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(m), in.data(), out.data(), FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  Periodogram p;
  for (std::size_t k = 0; k < m; ++k) {
    p.f.push_back(fs * static_cast<double>(k) / static_cast<double>(m));
    p.psd.push_back(out[k][0] * out[k][0] + out[k][1] * out[k][1]);
  }
  return p;
}

// Indices of local maxima, strongest first.
inline std::vector<std::size_t> psd_peaks(const Periodogram& p, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 1; k + 1 < p.psd.size(); ++k)
    if (p.psd[k] > p.psd[k - 1] && p.psd[k] >= p.psd[k + 1]) idx.push_back(k);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p.psd[a] > p.psd[b]; });
  if (idx.size() > count) idx.resize(count);
  return idx;
}

// Full width at half maximum of the strongest peak, linear interpolation.
inline double peak_fwhm(const Periodogram& p) {
  std::size_t im = 0;
  for (std::size_t k = 0; k < p.psd.size(); ++k)
    if (p.psd[k] > p.psd[im]) im = k;
  const double half = 0.5 * p.psd[im];
  double left = p.f.front(), right = p.f.back();
  for (std::size_t k = im; k > 0; --k)
    if (p.psd[k - 1] < half) {
      left = p.f[k - 1] + (half - p.psd[k - 1]) / (p.psd[k] - p.psd[k - 1]) * (p.f[k] - p.f[k - 1]);
      break;
    }
  for (std::size_t k = im; k + 1 < p.psd.size(); ++k)
    if (p.psd[k + 1] < half) {
      right = p.f[k] + (p.psd[k] - half) / (p.psd[k] - p.psd[k + 1]) * (p.f[k + 1] - p.f[k]);
      break;
    }
  return right - left;
}

}  // namespace molsense
