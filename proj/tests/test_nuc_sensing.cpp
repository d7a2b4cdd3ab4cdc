#include "catch_amalgamated.hpp"
#include "molsense/ac_sensing.hpp"
#include "molsense/io.hpp"
#include "molsense/nuc_sensing.hpp"
#include "test_util.hpp"

using namespace molsense;
using Catch::Approx;

namespace {

EnsembleConfig small_config() {
  EnsembleConfig c = load_ensemble_config(testutil::data("ensemble.json"));
  c.n_orient = 8;
  c.n_draws = 200;
  return c;
}

}  // namespace

TEST_CASE("sphere sampling", "[nuc]") {
  const auto d = fibonacci_sphere(4096);
  Vec3 mean = Vec3::Zero();
  for (const auto& v : d) {
    CHECK(v.norm() == Approx(1.0).epsilon(1e-12));
    mean += v;
  }
  CHECK((mean / 4096.0).norm() < 1e-3);
  // <sin^2 2 theta> = 8/15
  const double s = orientation_average([](const Vec3& b) { return std::pow(std::sin(2 * std::acos(b.z())), 2); }, 4096);
  CHECK(s == Approx(8.0 / 15.0).epsilon(1e-3));
  NucleusSpec n;
  n.A_aniso = 1.0;
  const double a1 = orientation_average(
      [&](const Vec3& b) {
        NucleusSpec m = n;
        m.theta = std::acos(b.z());
        return std::pow(hyperfine_secular(m).A1, 2);
      },
      4096);
  CHECK(a1 == Approx(2.25 * 8.0 / 15.0).epsilon(1e-3));
  CHECK(random_sphere(10, 3).size() == 10);
  CHECK(random_sphere(10, 3)[4] == random_sphere(10, 3)[4]);
}

TEST_CASE("strong coupling threshold", "[nuc]") {
  Hyperfine h;
  h.A1 = 0.29 * two_pi * 55e6;
  CHECK_FALSE(is_strong(h, 55e6));
  h.A0 = -0.31 * two_pi * 55e6;
  CHECK(is_strong(h, 55e6));
}

TEST_CASE("dilating the molecule scales point-dipole couplings by 1/64", "[nuc]") {
  EnsembleConfig c = small_config();
  const Vec3 b = Vec3(0.3, -0.2, 0.9).normalized();
  const NuclearBath a = site_couplings(c, Species::H1, b);
  c.molecule = c.molecule.dilated(4.0);
  const NuclearBath d = site_couplings(c, Species::H1, b);
  REQUIRE(a.sites.size() == 63);
  for (std::size_t i = 0; i < a.sites.size(); ++i) {
    CHECK(d.sites[i].hf.A1 == Approx(a.sites[i].hf.A1 / 64).epsilon(1e-9));
    CHECK(d.sites[i].hf.A0 == Approx(a.sites[i].hf.A0 / 64).epsilon(1e-9));
  }
}

TEST_CASE("carbon table overrides point dipole", "[nuc]") {
  const EnsembleConfig c = small_config();
  const NuclearBath bath = site_couplings(c, Species::C13, Vec3::UnitZ());
  REQUIRE(bath.sites.size() == 52);
  CHECK(bath.sites[0].spec.A_iso == Approx(two_pi * 64e6));
  std::size_t strong = 0;
  for (const auto& s : bath.sites) strong += s.strong;
  CHECK(strong > 0);
  CHECK(strong < 52);
}

TEST_CASE("routed echo equals the weak product for weak baths", "[nuc]") {
  XyxydParams p;
  p.tau_d = 800e-9;
  p.tau_f = 396e-9;
  p.N = 8;
  const FilterFunction f = make_filter(make_xyxyd(p), 55e6, 8);
  NuclearBath bath;
  for (double a : {3e3, 8e3}) {
    BathSite s;
    s.spec.A_aniso = two_pi * a;
    s.spec.theta = 0.6;
    s.hf = hyperfine_secular(s.spec);
    s.nu = lobe_nu(1, f.T);
    bath.sites.push_back(s);
  }
  CHECK(echo_factor_routed(bath, f, p, 55e6) == Approx(echo_factor(bath, f)).margin(1e-14));
  const FilterFunction g = rescaled(f, 1.1 * f.T);
  CHECK(g.lobes[0].nu == Approx(lobe_nu(1, 1.1 * f.T)));
  CHECK(g.lobes[0].gamma == f.lobes[0].gamma);
}

TEST_CASE("occupancy limits of the N sweep", "[nuc]") {
  EnsembleConfig c = small_config();
  c.occupancy_H = 0.0;
  const NSweepResult h = n_sweep(c, Species::H1, {4, 8}, 1.0);
  CHECK(h.plateau == 1.0);
  for (double v : h.signal) CHECK(v == Approx(1.0).margin(1e-9));
  c.occupancy_C = 1.0;
  c.n_draws = 20;
  const NSweepResult cc = n_sweep(c, Species::C13, {4}, 1.0);
  CHECK(cc.plateau == 0.0);
}

TEST_CASE("correlation spectrum shows the hyperfine-split pair", "[nuc]") {
  XyxydParams p;
  p.tau_d = 800e-9;
  p.tau_f = 396e-9;
  const FilterFunction f = make_filter(make_xyxyd(p), 55e6, 8);
  BathSite s;
  s.spec.A_iso = two_pi * 40e3;
  s.spec.A_aniso = two_pi * 1e3;
  s.spec.theta = 0.9;
  s.hf = hyperfine_secular(s.spec);
  s.nu = lobe_nu(1, f.T);
  NuclearBath bath{{s}};
  const double fs = 4 * s.nu;
  std::vector<double> t;
  for (int i = 0; i < 8192; ++i) t.push_back(i / fs);
  const NucCorrResult r = nuc_corr_spec(bath, f, t);
  CHECK(r.small_phase);
  const Periodogram pg = psd(r.C, fs, {4, true});
  const auto pk = psd_peaks(pg, 2);
  REQUIRE(pk.size() == 2);
  const double split = std::abs(pg.f[pk[0]] - pg.f[pk[1]]);
  CHECK(split == Approx(std::abs(s.hf.A0) / two_pi).epsilon(0.03));
  CHECK(0.5 * (pg.f[pk[0]] + pg.f[pk[1]]) == Approx(s.nu).epsilon(1e-3));
  bath.sites[0].strong = true;
  CHECK(nuc_corr_spec(bath, f, {0.0}).C[0] == 0.0);
}

TEST_CASE("dip finding helpers", "[nuc]") {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i);
    y.push_back(1.0 - 0.5 * std::exp(-std::pow((i - 12.3) / 2.0, 2)) - 0.3 * std::exp(-std::pow((i - 35.0) / 2.0, 2)));
  }
  const auto d = sweep_dips(y, 2, 0.1);
  REQUIRE(d.size() == 2);
  CHECK(d[0] == 12);
  CHECK(d[1] == 35);
  CHECK(refine_minimum(x, y, d[0]) == Approx(12.3).margin(0.1));
}

TEST_CASE("signal fraction map", "[nuc]") {
  EnsembleConfig c = small_config();
  c.n_orient = 32;
  const FractionMap m = signal_fraction_map(c, Species::H1, 48, 1.78e-6, 0.35);
  double s = 0;
  for (double v : m.fraction) s += v;
  CHECK(s == Approx(1.0));
  CHECK(m.fraction.size() == 63);
  CHECK(m.set90 >= 1);
  CHECK(m.set90 <= 63);
  CHECK(m.element == "H");
  const FractionMap cm = signal_fraction_map(c, Species::C13, 48, 1.78e-6, 0.35);
  CHECK(cm.fraction.size() == 52);
  INFO("H set90 " << m.set90 << " C set90 " << cm.set90);
  for (auto i : cm.excluded) CHECK(cm.fraction[i] == 0.0);
}
