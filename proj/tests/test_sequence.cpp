#include "catch_amalgamated.hpp"
#include "molsense/propagation.hpp"
#include "molsense/sequence.hpp"

using namespace molsense;
using Catch::Approx;

namespace {

Vec3 bloch(const CMatrix& U) {
  const CMatrix rho = U * spin_half::sz() * U.adjoint();
  return 2.0 * Vec3((rho * spin_half::sx()).trace().real(), (rho * spin_half::sy()).trace().real(),
                    (rho * spin_half::sz()).trace().real());
}

}  // namespace

TEST_CASE("grid_steps", "[sequence]") {
  CHECK(grid_steps(67e-9, 1e-9) == 67);
  CHECK(grid_steps(0.0, 1e-9) == 0);
  CHECK_THROWS_AS(grid_steps(1.5e-9, 1e-9), ConfigError);
  CHECK_THROWS_AS(grid_steps(-1e-9, 1e-9), ConfigError);
}

TEST_CASE("XYXYd block layout", "[sequence]") {
  XyxydParams p;
  p.tau_d = 200e-9;
  p.tau_f = 100e-9;
  const Waveform w = make_xyxyd(p);
  CHECK_NOTHROW(w.validate());
  CHECK(w.duration() == Approx(block_duration(p)).epsilon(1e-12));
  CHECK(w.size() == 4 * 200 + 4 * 100 + 8 * 67);
  int ahp = 0, drive = 0;
  std::vector<std::string> labels;
  for (const auto& m : w.markers) {
    if (m.kind == SegmentKind::AHP) ++ahp;
    if (m.kind == SegmentKind::DRIVE) {
      ++drive;
      labels.push_back(m.label);
    }
  }
  CHECK(ahp == 8);
  CHECK(drive == 4);
  CHECK(labels == std::vector<std::string>{"x", "y", "x", "y"});
  // drive phases alternate between 0 and pi/2
  for (const auto& m : w.markers)
    if (m.kind == SegmentKind::DRIVE) CHECK(m.phase == Approx(m.label == "x" ? 0.0 : pi / 2).margin(1e-15));
  // block is time symmetric in |a|
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::hypot(w.ax[i], w.ay[i]) == Approx(std::hypot(w.ax[w.size() - 1 - i], w.ay[w.size() - 1 - i])).margin(1e-12));
  const Waveform w3 = repeat(w, 3);
  CHECK(w3.size() == 3 * w.size());
  CHECK(w3.markers.size() == 3 * w.markers.size());
  p.tau_f = 101e-9;
  CHECK_THROWS_AS(make_xyxyd(p), ConfigError);
}

TEST_CASE("phase offset reduction", "[sequence]") {
  for (std::size_t N : {1u, 4u, 24u}) {
    for (double phi : {0.0, 0.3, 5.0, 100.0, -2.0}) {
      const double a = xyxyd_phase_offset(phi, N);
      const double b = xyxyd_phase_offset(phi + two_pi * 8.0 * static_cast<double>(N), N);
      CHECK(a == Approx(b).margin(1e-12));
      CHECK(a >= 0.0);
      CHECK(a < two_pi);
      const double back = std::remainder(a * 8.0 * static_cast<double>(N) - phi, two_pi * 8.0 * static_cast<double>(N));
      CHECK(std::abs(back) < 1e-9);
    }
  }
}

TEST_CASE("AHP transfers z to the transverse plane", "[sequence]") {
  const AhpSpec s;
  const SpinSystem e = single_electron();
  for (double ph : {0.0, pi / 2, 1.1}) {
    const Vec3 v = bloch(waveform_propagator(make_ahp(s, AhpDirection::Open, ph), e, 55e6));
    CHECK(v.dot(transverse(ph)) > 0.99);
  }
  // robust over the Rabi range
  for (double u : {35e6, 55e6, 75e6}) {
    const Vec3 v = bloch(waveform_propagator(make_ahp(s, AhpDirection::Open, 0.0), e, u));
    CHECK(v.x() > 0.98);
  }
  // close with phase pi maps +x to +z
  const CMatrix U = waveform_propagator(make_ahp(s, AhpDirection::Close, pi), e, 55e6) *
                    waveform_propagator(make_ahp(s, AhpDirection::Open, 0.0), e, 55e6);
  CHECK(bloch(U).z() > 0.98);
  AhpSpec bad = s;
  bad.kappa = 2.0;
  CHECK_THROWS_AS(make_ahp(bad, AhpDirection::Open, 0.0), ConfigError);
  bad = s;
  bad.u_center = 1e6;
  CHECK_THROWS_AS(make_ahp(bad, AhpDirection::Open, 0.0), ConfigError);
}

TEST_CASE("sensing wrap reads I and Q", "[sequence]") {
  const SpinSystem e = single_electron();
  const Waveform core = ideal_z_rotation(pi / 3, 1e-9);
  for (bool ideal : {true, false}) {
    AhpSpec s;
    s.ideal = ideal;
    const double tol = ideal ? 1e-12 : 0.02;
    const auto sz = spin_half::sz();
    const double I = correlation(waveform_propagator(make_sensing_wrap(core, Quadrature::I, s), e, 55e6), sz, sz);
    const double Q = correlation(waveform_propagator(make_sensing_wrap(core, Quadrature::Q, s), e, 55e6), sz, sz);
    CHECK(I == Approx(0.5).margin(tol));
    CHECK(Q == Approx(std::sqrt(3.0) / 2).margin(tol));
  }
}

TEST_CASE("ideal AHP has zero duration", "[sequence]") {
  AhpSpec s;
  s.ideal = true;
  const Waveform w = make_ahp(s, AhpDirection::Open, 0.0);
  CHECK(w.size() == 0);
  CHECK(w.rotations.size() == 1);
  const Vec3 v = bloch(waveform_propagator(w, single_electron(), 55e6));
  CHECK(v.x() == Approx(1.0).margin(1e-12));
}

TEST_CASE("waveform validation", "[sequence]") {
  Waveform w;
  w.push(1.0, 0.5);
  CHECK_THROWS(w.validate());
  Waveform a, b;
  b.dt = 2e-9;
  b.push(0, 0);
  CHECK_THROWS(a.append(b));
}
