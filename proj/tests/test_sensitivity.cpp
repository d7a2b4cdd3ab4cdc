#include "catch_amalgamated.hpp"
#include "molsense/sensitivity.hpp"

using namespace molsense;
using Catch::Approx;

TEST_CASE("readout bandwidth", "[sensitivity]") {
  const ReadoutParams p;
  const double mu = 9.2847647e-24;
  const double hand = mu * mu * 0.98 * 0.98 * 1.6e5 * 1.6e5 / (2 * 2.4e-18 * 2.4e-18);
  CHECK(bandwidth_R(p) == Approx(hand).epsilon(1e-6));
  ReadoutParams q = p;
  q.G_rms *= 2;
  CHECK(bandwidth_R(q) == Approx(4 * bandwidth_R(p)));
  q.D_duty = 1.2;
  CHECK_THROWS_AS(bandwidth_R(q), ConfigError);
}

TEST_CASE("noise model", "[sensitivity]") {
  const NoiseModel nm;
  CHECK(nm(1e3, 1.0, 1.0) == Approx(std::sqrt(2.0 + 2e-3 + 1e-6)));
  for (double NsR : {0.2, 25.0, 62.0}) {
    const double tm = 68e-3;
    double prev = nm(NsR, 1e-3, tm);
    for (double t0 : log_grid(1e-3, tm, 50)) {
      const double s = nm(NsR, t0, tm);
      CHECK(s <= prev * (1 + 1e-12));
      prev = s;
    }
  }
  NoiseModel custom;
  custom.eval = [](const NoiseModel&, double, double, double) { return 3.0; };
  CHECK(sigma(custom, 1, 1, 1) == 3.0);
  CHECK_THROWS_AS(nm(0.0, 1, 1), ConfigError);
}

TEST_CASE("radius and coupling conversions", "[sensitivity]") {
  const GyroTable g;
  for (double r : {1e-9, 2.5e-9, 5e-9}) {
    CHECK(rmax_from_a1min(a1_from_rmax(r)) == Approx(r).epsilon(1e-12));
    CHECK(a1_from_rmax(r) == Approx(1.5 * point_dipole_aniso(r, g, Species::H1)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(rmax_from_a1min(0.0), ConfigError);
}

TEST_CASE("threshold kinds parse", "[sensitivity]") {
  CHECK(parse_threshold_kind("bmin") == ThresholdKind::BMin);
  CHECK(parse_threshold_kind("rmax") == ThresholdKind::A1Min);
  CHECK_THROWS_AS(parse_threshold_kind("x"), ConfigError);
}

TEST_CASE("budget defaults", "[sensitivity]") {
  const SenseBudget b;
  CHECK(b.n_max() == 293);
  SenseBudget c = b;
  c.N_min = 400;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("threshold postcondition", "[sensitivity]") {
  const SenseBudget b;
  const NoiseModel nm;
  for (double NsR : {5.0, 25.0, 62.0}) {
    const ThresholdResult r = threshold(ThresholdKind::BMin, NsR, 60.0, b, nm);
    REQUIRE(r.feasible);
    CHECK(r.snr == Approx(1.0).epsilon(1e-9));
    CHECK(snr_ac(r.value, r.tau0, r.taum, r.N, b, nm, NsR, 60.0) == Approx(1.0).epsilon(1e-9));
    CHECK(r.N >= b.N_min);
    CHECK(r.N <= b.n_max());
    const ThresholdResult a = threshold(ThresholdKind::A1Min, NsR, 60.0, b, nm);
    REQUIRE(a.feasible);
    CHECK(snr_nuc(a.value, a.tau0, a.taum, a.N, b, nm, NsR, 60.0) == Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("threshold scaling and monotonicity", "[sensitivity]") {
  SenseBudget b;
  b.tau0_points = 400;
  const NoiseModel nm;
  const double b1 = threshold(ThresholdKind::BMin, 62.0, 1000.0, b, nm).value;
  const double b4 = threshold(ThresholdKind::BMin, 62.0, 4000.0, b, nm).value;
  CHECK(b4 / b1 == Approx(0.5).epsilon(0.01));
  const auto NsR = log_grid(0.5, 100.0, 6);
  const auto ta = log_grid(1.0, 1000.0, 5);
  for (ThresholdKind k : {ThresholdKind::BMin, ThresholdKind::A1Min}) {
    const SensitivityMap m = sensitivity_map(k, NsR, ta, b, nm);
    for (std::size_t i = 0; i < NsR.size(); ++i)
      for (std::size_t j = 0; j < ta.size(); ++j) {
        const auto& c = m.cells[i][j];
        if (!c.feasible) continue;
        if (j + 1 < ta.size() && m.cells[i][j + 1].feasible) CHECK(m.cells[i][j + 1].value <= c.value);
        if (i + 1 < NsR.size() && m.cells[i + 1][j].feasible) CHECK(m.cells[i + 1][j].value <= c.value);
        CHECK(m.masked[i][j] == (c.snr0 < 1.0));
      }
  }
  const ThresholdResult tiny = threshold(ThresholdKind::BMin, 1e-6, 1e-3, b, nm);
  CHECK_FALSE(tiny.feasible);
  CHECK(tiny.snr0 < 1.0);
}
