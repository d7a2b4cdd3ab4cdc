#include <random>

#include "catch_amalgamated.hpp"
#include "molsense/filter.hpp"

using namespace molsense;
using Catch::Approx;

namespace {

XyxydParams ref_params() {
  XyxydParams p;
  p.tau_d = 800e-9;
  p.tau_f = 396e-9;
  return p;
}

}  // namespace

TEST_CASE("lobe frequencies", "[filter]") {
  const double T = 1.78e-6;
  CHECK(lobe_nu(1, T) == Approx(2.0 / T));
  CHECK(lobe_nu(3, T) == Approx(5 * lobe_nu(1, T)));
  for (int k = 1; k <= 4; ++k) CHECK(lobe_nu(k, lobe_for_nucleus(14.06e6, k)) == Approx(14.06e6));
  CHECK_THROWS_AS(lobe_for_nucleus(14e6, 0), ConfigError);
  CHECK_THROWS_AS(lobe_for_nucleus(-1.0, 1), ConfigError);
}

TEST_CASE("hard-pulse Gamma_k of a square wave", "[filter]") {
  const std::size_t n = 8000;
  const double dt = 1e-10;
  const double T = dt * n;
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = std::cos(two_pi * 2.0 / T * dt * (i + 0.5)) >= 0 ? 1.0 : -1.0;
  for (int k = 1; k <= 5; ++k) {
    const double expect = (k % 2 ? 1.0 : -1.0) * 2.0 / (pi * (2 * k - 1));
    CHECK(gamma_k_samples(m, dt, k) == Approx(expect).margin(2e-3));
  }
}

TEST_CASE("modulation trace matches sampled modulation", "[filter]") {
  const Waveform w = make_xyxyd(ref_params());
  const ModulationTrace tr = modulation_trace(w, 55e6);
  const auto m = modulation_fn(w, 55e6);
  CHECK(tr.T == Approx(w.duration()));
  for (std::size_t i = 0; i < m.size(); i += 97) CHECK(tr.eval(w.dt * (i + 0.5)) == Approx(m[i]).margin(1e-9));
  CHECK(std::abs(tr.mean()) < 1e-3);
  for (double v : m) CHECK(std::abs(v) <= 1.0 + 1e-9);
  CHECK(gamma_k(tr, 1) == Approx(gamma_k_samples(m, w.dt, 1)).margin(1e-4));
}

TEST_CASE("zeta nulls and peak", "[filter]") {
  const FilterFunction f = make_filter(make_xyxyd(ref_params()), 55e6, 16);
  const double NT = 16 * f.T, nu1 = lobe_nu(1, f.T);
  CHECK(f.zeta(nu1) == Approx(f.gamma(1)).epsilon(0.02));
  for (int m : {1, 2, 3, -1, -2}) CHECK(std::abs(f.zeta(nu1 + m / NT)) < 1e-10);
  CHECK(f.zeta(-nu1) == Approx(f.zeta(nu1)).epsilon(1e-12));
  CHECK(f.with_N(4).N == 4);
  CHECK_FALSE(f.rabi_averaged);
  for (const auto& l : f.lobes) CHECK(std::abs(l.gamma_sine) < 1e-3);
}

TEST_CASE("pinning identity over random sinusoids", "[filter]") {
  const std::size_t N = 24;
  const FilterFunction f = make_filter(make_xyxyd(ref_params()), 55e6, N);
  const double NT = N * f.T, g = GyroTable{}.gamma_e;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0, 1);
  int worst_k = 0;
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const int k = 1 + static_cast<int>(U(rng) * 3);
    Sinusoid s{1e-9 * (0.5 + U(rng)), lobe_nu(k, f.T) + (U(rng) - 0.5) * 4.0 / NT, two_pi * U(rng)};
    const double td = time_domain_phase(f, s, g);
    const double fd = effective_offset(f, s, g).real() * NT;
    const double scale = NT * g * s.amplitude * std::abs(f.gamma(1));
    const double err = std::abs(td - fd) / scale;
    if (err > worst) {
      worst = err;
      worst_k = k;
    }
  }
  INFO("worst lobe " << worst_k);
  CHECK(worst < 0.02);
  // on-resonance cosine pins phi = N T gamma B Gamma_k
  for (int k = 1; k <= 3; ++k) {
    const Sinusoid s{1e-9, lobe_nu(k, f.T), 0.0};
    CHECK(time_domain_phase(f, s, g) == Approx(NT * g * 1e-9 * f.gamma(k)).margin(0.02 * NT * g * 1e-9 * f.gamma(1)));
  }
}

TEST_CASE("Rabi averaging path", "[filter]") {
  RabiDistribution r;
  r.u = {30e6, 55e6, 80e6};
  r.w = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  FilterOptions o;
  o.force_average = true;
  const Waveform w = make_xyxyd(ref_params());
  const FilterFunction fa = make_filter(w, r, 8, o);
  CHECK(fa.rabi_averaged);
  CHECK(fa.traces.size() == fa.weights.size());
  double s = 0;
  for (double x : fa.weights) s += x;
  CHECK(s == Approx(1.0));
  o.force_average = false;
  o.force_center = true;
  CHECK_FALSE(make_filter(w, r, 8, o).rabi_averaged);
}

TEST_CASE("tabulated spectrum guards", "[filter]") {
  const FilterFunction f = make_filter(make_xyxyd(ref_params()), 55e6, 8);
  TabulatedSpectrum t;
  t.nu = {1.0, 2.0};
  t.B = {0.0, 0.0};
  CHECK_THROWS_AS(effective_offset(f, t, 1.0), ConfigError);
}
