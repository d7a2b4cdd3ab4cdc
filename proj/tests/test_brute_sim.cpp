#include "catch_amalgamated.hpp"
#include "molsense/brute_sim.hpp"
#include "molsense/filter.hpp"

using namespace molsense;
using Catch::Approx;

namespace {

XyxydParams ref_params(std::size_t N) {
  XyxydParams p;
  p.tau_d = 800e-9;
  p.tau_f = 396e-9;
  p.N = N;
  return p;
}

NucleusSpec weak_nucleus(double aniso_hz, double theta) {
  NucleusSpec n;
  n.species = Species::C13;
  n.A_aniso = two_pi * aniso_hz;
  n.theta = theta;
  return n;
}

}  // namespace

TEST_CASE("dephasing removes transverse electron coherence", "[brute]") {
  const SpinSystem s = single_electron();
  const CMatrix r = dephase_electrons(s, spin_half::sx() + 0.3 * spin_half::sz());
  CHECK((r - 0.3 * spin_half::sz()).norm() < 1e-14);
}

TEST_CASE("bare electron echo returns to +z", "[brute]") {
  const EchoEngine e(single_electron(), ref_params(4), 55e6);
  for (std::size_t N : {1u, 4u, 12u}) CHECK(e.correlation_at(N) > 0.9);
  const auto c = e.curve({1, 2});
  CHECK(c.size() == 2);
}

TEST_CASE("schedule propagation matches the echo engine", "[brute]") {
  const XyxydParams p = ref_params(3);
  NucleusSpec n = weak_nucleus(40e3, 0.8);
  const SpinSystem sys = electron_with_bath({n}, {two_pi * 3.0e5});
  SimTask t;
  t.sys = sys;
  t.u = 55e6;
  t.initial = sys.electron_op(spin_half::sz(), 0);
  t.observable = t.initial;
  t.schedule = {{make_ahp(p.ahp, AhpDirection::Open, 0.0), 1},
                {make_xyxyd(p), p.N},
                {make_ahp(p.ahp, AhpDirection::Close, closing_phase(Quadrature::I)), 1}};
  const EchoEngine e(sys, p, 55e6);
  CHECK(propagate(t) == Approx(e.correlation_at(p.N)).margin(1e-10));
  t.schedule.insert(t.schedule.begin() + 1, {FreeEvolution{1.5e-9}, 1});
  CHECK_THROWS_AS(propagate(t), ConfigError);
}

TEST_CASE("brute echo tracks the weak-coupling cosine", "[brute]") {
  const std::size_t N = 8;
  const XyxydParams p = ref_params(N);
  const FilterFunction f = make_filter(make_xyxyd(p), 55e6, N);
  const double nu = lobe_nu(1, f.T), NT = N * f.T;
  for (double aniso : {5e3, 15e3, 25e3}) {
    const NucleusSpec n = weak_nucleus(aniso, pi / 4);
    const double A1 = hyperfine_secular(n).A1;
    const double weak = std::cos(NT * f.zeta(nu) * A1 / 2);
    const double brute = brute_echo({n}, {two_pi * nu}, p, 55e6);
    INFO("aniso " << aniso << " weak " << weak << " brute " << brute);
    CHECK(brute == Approx(weak).margin(0.05));
  }
  // off resonance the nucleus is invisible
  const NucleusSpec n = weak_nucleus(15e3, pi / 4);
  CHECK(brute_echo({n}, {two_pi * (nu + 2.5 / NT)}, p, 55e6) == Approx(1.0).margin(0.05));
}

TEST_CASE("brute correlation spectrum without nuclei is flat", "[brute]") {
  const XyxydParams p = ref_params(2);
  const auto c = brute_corr_spec({}, {}, p, 55e6, {0.0, 100e-9, 1e-6});
  for (double v : c) CHECK(v == Approx(c[0]).margin(1e-9));
  CHECK_THROWS_AS(electron_with_bath(std::vector<NucleusSpec>(4), std::vector<double>(4, 1e6)), ConfigError);
}
