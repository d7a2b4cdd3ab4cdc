#include <filesystem>
#include <fstream>

#include "catch_amalgamated.hpp"
#include "molsense/spin_model.hpp"
#include "test_util.hpp"

using namespace molsense;
using Catch::Approx;

namespace {

std::vector<double> sorted_eigs(const CMatrix& m) {
  const auto es = eig_hermitian(m, 1e-10);
  std::vector<double> v(es.values.data(), es.values.data() + es.values.size());
  std::sort(v.begin(), v.end());
  return v;
}

std::string tmpfile(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("molsense_test_" + name);
  std::ofstream(p) << body;
  return p.string();
}

}  // namespace

TEST_CASE("offset Hamiltonian", "[spin_model]") {
  SpinSystem s;
  s.offsets = {0.0};
  CHECK(build_offset_h(s).norm() == 0.0);
  s.offsets = {two_pi * 1e6};
  const CMatrix h = build_offset_h(s);
  CHECK(h(0, 0).real() == Approx(-two_pi * 1e6 / 2));
  CHECK(h(1, 1).real() == Approx(two_pi * 1e6 / 2));
  SpinSystem p;
  p.n_electrons = 2;
  const double a = 3.0, b = 1.25;
  p.offsets = {a, b};
  std::vector<double> expect = {-(a + b) / 2, -(a - b) / 2, (a - b) / 2, (a + b) / 2};
  std::sort(expect.begin(), expect.end());
  const auto ev = sorted_eigs(build_offset_h(p));
  for (int i = 0; i < 4; ++i) CHECK(ev[i] == Approx(expect[i]).margin(1e-12));
}

TEST_CASE("dipolar Hamiltonian", "[spin_model]") {
  CHECK(build_dipolar_h(electron_pair(0.0)).norm() == 0.0);
  const double d = 2.3;
  const auto ev = sorted_eigs(build_dipolar_h(electron_pair(d)));
  const std::vector<double> expect = {-d, 0.0, d / 2, d / 2};
  for (int i = 0; i < 4; ++i) CHECK(ev[i] == Approx(expect[i]).margin(1e-12));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1, 1);
  SpinSystem s;
  s.n_electrons = 3;
  s.couplings = {{0, 1, U(rng)}, {0, 2, U(rng)}, {1, 2, U(rng)}};
  const CMatrix h = build_dipolar_h(s);
  const CMatrix sz = s.total_electron(spin_half::sz());
  CHECK((h * sz - sz * h).norm() < 1e-13);
  CHECK(std::abs(h.trace()) < 1e-13);
  CHECK(hermitian_defect(h) < 1e-12);

  // relabel 0 <-> 1 with matching couplings
  SpinSystem t = s;
  t.couplings = {{0, 1, s.couplings[0].D}, {0, 2, s.couplings[2].D}, {1, 2, s.couplings[1].D}};
  CMatrix swap = CMatrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) {
    const int b0 = (i >> 2) & 1, b1 = (i >> 1) & 1, b2 = i & 1;
    swap((b1 << 2) | (b0 << 1) | b2, i) = 1.0;
  }
  CHECK((swap * h * swap.adjoint() - build_dipolar_h(t)).norm() < 1e-13);
}

TEST_CASE("control Hamiltonian", "[spin_model]") {
  const SpinSystem s = single_electron();
  CHECK(build_control_h(s, 0, 0, 55e6).norm() == 0.0);
  CHECK((build_control_h(s, 1, 0, 55e6) - two_pi * 55e6 * spin_half::sx()).norm() < 1e-6);
  for (double ph = 0; ph < two_pi; ph += 0.37) {
    const auto ev = sorted_eigs(build_control_h(s, std::cos(ph), std::sin(ph), 40e6));
    CHECK(ev[0] == Approx(-pi * 40e6));
    CHECK(ev[1] == Approx(pi * 40e6));
  }
  CHECK_THROWS(build_control_h(s, 1.0, 0.5, 1e6));
  // microwaves leave nuclei alone
  SpinSystem n;
  n.nuclei.push_back(NucleusSpec{});
  const CMatrix hc = build_control_h(n, 1, 0, 1e6);
  const CMatrix iz = n.nucleus_op(spin_half::sz(), 0);
  CHECK((hc * iz - iz * hc).norm() < 1e-9);
}

TEST_CASE("secular hyperfine parameters", "[spin_model]") {
  NucleusSpec n;
  n.A_aniso = 1.0;
  n.theta = std::acos(1.0 / std::sqrt(3.0));
  CHECK(std::abs(hyperfine_secular(n).A0) < 1e-15);
  n.theta = pi / 4;
  CHECK(hyperfine_secular(n).A1 == Approx(1.5));
  n.A_iso = 0.3;
  n.theta = 0.0;
  CHECK(hyperfine_secular(n).A0 == Approx(0.3 - 2.0));
  CHECK(hyperfine_secular(n).A1 == Approx(0.0).margin(1e-15));
  for (double th = 0.05; th < 1.5; th += 0.1) {
    NucleusSpec a = n, b = n, c = n;
    a.theta = th;
    b.theta = th + pi;
    c.theta = pi / 2 - th;
    CHECK(hyperfine_secular(a).A0 == Approx(hyperfine_secular(b).A0));
    CHECK(hyperfine_secular(a).A1 == Approx(hyperfine_secular(c).A1));
  }
}

TEST_CASE("point-dipole anisotropy", "[spin_model]") {
  const GyroTable g;
  const double r = 2.5e-9;
  CHECK(point_dipole_aniso(2 * r, g, Species::H1) == Approx(point_dipole_aniso(r, g, Species::H1) / 8).epsilon(1e-14));
  CHECK(point_dipole_aniso(1e-9, g, Species::H1) / point_dipole_aniso(1e-8, g, Species::H1) == Approx(1000).epsilon(1e-12));
  // hand evaluation: 1e-7 * 1.0546e-34 * (2pi 42.6e6)(2pi 28.025e9) / (2.5e-9)^3 / 2pi
  const double hand = 1e-7 * 1.054571817e-34 * (two_pi * 42.6e6) * (two_pi * 28.025e9) / 1.5625e-26 / two_pi;
  CHECK(point_dipole_aniso(r, g, Species::H1) / two_pi == Approx(hand).epsilon(1e-6));
  CHECK(hand == Approx(5.1e3).epsilon(0.02));
  CHECK_THROWS(point_dipole_aniso(0.4e-10, g, Species::H1));
  NucleusSpec n = point_dipole_nucleus(Vec3(0, 0, 5e-10), Vec3(0, 0, 1), g, Species::H1);
  CHECK_NOTHROW(validate_nucleus(n, g));
  n.A_aniso *= 1.01;
  CHECK_THROWS_AS(validate_nucleus(n, g), ConfigError);
}

TEST_CASE("gyromagnetic table and Larmor frequencies", "[spin_model]") {
  const GyroTable g;
  CHECK(g.nu_e() == Approx(9.248e9).epsilon(1e-4));
  CHECK(g.nu(Species::H1) == Approx(14.058e6).epsilon(1e-4));
  CHECK(g.nu(Species::C13) == Approx(3.5338e6).epsilon(1e-4));
}

TEST_CASE("Rabi CSV loader", "[spin_model]") {
  const auto d1 = load_rabi_csv(tmpfile("r1.csv", "55e6,1.0\n"));
  CHECK(d1.u.size() == 1);
  CHECK(d1.center() == 55e6);
  const auto d2 = load_rabi_csv(tmpfile("r2.csv", "u_hz,weight\n# c\n40e6,3\n60e6,3\n"));
  CHECK(d2.w[0] == Approx(0.5));
  CHECK(d2.w[1] == Approx(0.5));
  CHECK_THROWS_AS(load_rabi_csv(tmpfile("r3.csv", "40e6,1\nabc,2\n")), ConfigError);
  CHECK_THROWS_AS(load_rabi_csv(tmpfile("r4.csv", "40e6,0\n")), ConfigError);
  const auto b = load_rabi_csv(testutil::data("rabi_distribution.csv"));
  CHECK(b.mean() == Approx(55e6).epsilon(0.01));
  CHECK(b.center() == Approx(55e6).epsilon(0.01));
  const auto c = b.coarse(5);
  CHECK(c.u.size() == 5);
  CHECK(c.mean() == Approx(b.mean()).epsilon(1e-9));
}

TEST_CASE("XYZ geometry loader", "[spin_model]") {
  const auto g = load_xyz(testutil::data("ox063_model.xyz"));
  CHECK(g.count("H") == 63);
  CHECK(g.count("C") == 52);
  const auto d = g.dilated(2.0);
  CHECK(d.relative_positions("H")[5].norm() == Approx(2 * g.relative_positions("H")[5].norm()));
  CHECK_THROWS_AS(load_xyz(tmpfile("x1.xyz", "2\nc\nH 0 0 0\n")), ConfigError);
  CHECK_THROWS_AS(load_xyz(tmpfile("x2.xyz", "1\nc\nXx 0 0 0\n")), ConfigError);
  CHECK_THROWS_AS(load_xyz(tmpfile("x3.xyz", "1\nc\nH 0 0\n")), ConfigError);
  const auto e = load_xyz(tmpfile("x4.xyz", "1\nelectron: 1 2 3\nH 1 2 4\n"));
  CHECK(e.relative_positions("H")[0].z() == Approx(1e-10));
}

TEST_CASE("hyperfine table loader", "[spin_model]") {
  const auto t = load_hyperfine_csv(testutil::data("c13_hyperfine.csv"));
  CHECK(t.size() == 52);
  CHECK(t[0].A_iso == Approx(two_pi * 64e6));
  CHECK_THROWS_AS(load_hyperfine_csv(tmpfile("h1.csv", "0,1,2\n0,1,2\n")), ConfigError);
}

TEST_CASE("Hamiltonian builders are Hermitian", "[spin_model]") {
  SpinSystem s = electron_pair(two_pi * 1e5);
  s.offsets = {1e6, -2e6};
  NucleusSpec n;
  n.A_iso = 1e5;
  n.A_aniso = 3e5;
  n.theta = 0.7;
  s.nuclei = {n};
  s.nuclear_larmor = {two_pi * 14e6};
  CHECK(hermitian_defect(build_static_h(s)) < 1e-12);
  CHECK(hermitian_defect(build_control_h(s, 0.3, 0.4, 5e7)) < 1e-12);
  CHECK(hermitian_defect(build_nuclear_h(s)) < 1e-12);
}
