#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "molsense/numerics.hpp"

namespace molsense {

enum class SegmentKind { AHP, DRIVE, FREE };

inline const char* segment_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::AHP: return "AHP";
    case SegmentKind::DRIVE: return "DRIVE";
    default: return "FREE";
  }
}

struct Marker {
  std::size_t start = 0;
  SegmentKind kind = SegmentKind::FREE;
  std::string label;
  double phase = 0.0;  // microwave phase of the segment, rad
};

// Instantaneous electron rotation exp(-i angle n.S) applied before sample `index`.
struct IdealRotation {
  std::size_t index = 0;
  Vec3 axis = Vec3::UnitZ();
  double angle = 0.0;
};

struct Waveform {
  double dt = 1e-9;
  std::vector<double> ax, ay;
  std::vector<double> detuning;  // rad/s, enters as -d(t) S^z
  std::vector<Marker> markers;
  std::vector<IdealRotation> rotations;

  std::size_t size() const { return ax.size(); }
  double duration() const { return dt * static_cast<double>(size()); }

  void push(double x, double y, double d = 0.0) {
    ax.push_back(x);
    ay.push_back(y);
    detuning.push_back(d);
  }

  void mark(SegmentKind k, std::string label, double phase = 0.0) {
    markers.push_back({size(), k, std::move(label), phase});
  }

  void append(const Waveform& o) {
    if (o.size() > 0 || !o.rotations.empty() || !o.markers.empty())
      if (std::abs(o.dt - dt) > 1e-18) throw Error("Waveform::append: dt mismatch");
    const std::size_t off = size();
    for (auto m : o.markers) {
      m.start += off;
      markers.push_back(m);
    }
    for (auto r : o.rotations) {
      r.index += off;
      rotations.push_back(r);
    }
    ax.insert(ax.end(), o.ax.begin(), o.ax.end());
    ay.insert(ay.end(), o.ay.begin(), o.ay.end());
    detuning.insert(detuning.end(), o.detuning.begin(), o.detuning.end());
  }

  void validate() const {
    if (!(dt > 0)) throw Error("Waveform: dt must be positive");
    if (ay.size() != ax.size() || detuning.size() != ax.size()) throw Error("Waveform: ragged sample arrays");
    for (std::size_t i = 0; i < size(); ++i)
      if (std::hypot(ax[i], ay[i]) > 1.0 + 1e-12) throw Error("Waveform: |a| > 1 at sample " + std::to_string(i));
    for (std::size_t i = 1; i < markers.size(); ++i)
      if (markers[i].start < markers[i - 1].start) throw Error("Waveform: markers out of order");
    if (!markers.empty() && markers.front().start != 0 && size() > 0) throw Error("Waveform: markers do not start at 0");
  }
};

// Number of dt steps in t; rejects off-grid durations.
inline std::size_t grid_steps(double t, double dt, const char* what = "duration") {
  if (t < 0) throw ConfigError(std::string(what) + " is negative");
  const double n = t / dt;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-6) throw ConfigError(std::string(what) + " is not representable on the dt grid");
  return static_cast<std::size_t>(r);
}

inline Waveform free_evolution(double t, double dt, const std::string& label = "free") {
  Waveform w;
  w.dt = dt;
  const std::size_t n = grid_steps(t, dt, "free evolution time");
  if (n > 0) w.mark(SegmentKind::FREE, label);
  for (std::size_t i = 0; i < n; ++i) w.push(0.0, 0.0);
  return w;
}

// tanh amplitude / tan frequency adiabatic half passage.
struct AhpSpec {
  double duration = 67e-9;       // s
  double sweep_bandwidth = 80e6; // Hz, peak detuning excursion
  double xi = 2.0;               // amplitude shape
  double kappa = 1.3;            // frequency shape, < pi/2
  double dt = 1e-9;
  bool ideal = false;            // instantaneous pi/2 rotations
  double u_center = 55e6;        // Hz, used for the adiabaticity floor
  double adiabaticity_floor = 2.0;  // minimum u_center * duration

  double t_ahp() const { return ideal ? 0.0 : duration; }
};

enum class AhpDirection {
  Open,   // +z to n(phase)
  Close   // n(phase) to -z
};

inline Vec3 transverse(double phase) { return Vec3(std::cos(phase), std::sin(phase), 0.0); }

inline Waveform make_ahp(const AhpSpec& s, AhpDirection dir, double phase) {
  Waveform w;
  w.dt = s.dt;
  const char* label = dir == AhpDirection::Open ? "ahp_open" : "ahp_close";
  if (s.ideal) {
    // Both directions are a pi/2 turn about z x n.
    const Vec3 n = transverse(phase);
    w.mark(SegmentKind::AHP, label, phase);
    w.rotations.push_back({0, Vec3::UnitZ().cross(n), pi / 2});
    return w;
  }
  if (!(s.duration > 0)) throw ConfigError("AHP duration must be positive");
  if (!(s.kappa > 0 && s.kappa < pi / 2)) throw ConfigError("AHP kappa must lie in (0, pi/2)");
  if (s.u_center * s.duration < s.adiabaticity_floor)
    throw ConfigError("AHP adiabaticity floor violated (u_center * duration too small)");
  const std::size_t n = grid_steps(s.duration, s.dt, "AHP duration");
  const double W = two_pi * s.sweep_bandwidth;
  const double c = std::cos(phase), sn = std::sin(phase);
  w.mark(SegmentKind::AHP, label, phase);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    double amp, field_z;
    if (dir == AhpDirection::Open) {
      amp = std::tanh(s.xi * x) / std::tanh(s.xi);
      field_z = W * std::tan(s.kappa * (1.0 - x)) / std::tan(s.kappa);
    } else {
      amp = std::tanh(s.xi * (1.0 - x)) / std::tanh(s.xi);
      field_z = -W * std::tan(s.kappa * x) / std::tan(s.kappa);
    }
    w.push(amp * c, amp * sn, -field_z);
  }
  return w;
}

inline Waveform make_primitive(double axis_phase, double tau_d, const AhpSpec& ahp, double extra_phase = 0.0,
                               const std::string& label = "prim") {
  if (!(tau_d > 0)) throw ConfigError("primitive drive time must be positive");
  const double ph = axis_phase + extra_phase;
  Waveform w;
  w.dt = ahp.dt;
  w.append(make_ahp(ahp, AhpDirection::Open, ph));
  const std::size_t n = grid_steps(tau_d, ahp.dt, "tau_d");
  w.mark(SegmentKind::DRIVE, label, ph);
  for (std::size_t i = 0; i < n; ++i) w.push(std::cos(ph), std::sin(ph));
  w.append(make_ahp(ahp, AhpDirection::Close, ph));
  return w;
}

struct XyxydParams {
  double tau_d = 800e-9;
  double tau_f = 395e-9;
  AhpSpec ahp;
  std::size_t N = 1;
  double phase_shift = 0.0;  // rad

  double t_ahp() const { return ahp.t_ahp(); }
  double dt() const { return ahp.dt; }
};

inline double block_duration(double tau_d, double tau_f, double t_ahp) { return 4 * tau_d + 4 * tau_f + 8 * t_ahp; }
inline double block_duration(const XyxydParams& p) { return block_duration(p.tau_d, p.tau_f, p.t_ahp()); }

// Per-primitive phase offset phi/(8N), reduced modulo 2 pi.
inline double xyxyd_phase_offset(double phi, std::size_t N) {
  const double period = two_pi * 8.0 * static_cast<double>(N);
  double r = std::fmod(phi, period);
  if (r < 0) r += period;
  return r / (8.0 * static_cast<double>(N));
}

// One XYXYd block; XYXYd-N is N repetitions of it.
inline Waveform make_xyxyd(const XyxydParams& p) {
  if (p.N < 1) throw ConfigError("XYXYd: N must be >= 1");
  if (!(p.tau_f >= 0)) throw ConfigError("XYXYd: tau_f must be non-negative");
  grid_steps(p.tau_f / 2, p.dt(), "tau_f/2");
  const double off = xyxyd_phase_offset(p.phase_shift, p.N);
  Waveform w;
  w.dt = p.dt();
  for (int rep = 0; rep < 2; ++rep) {
    w.append(free_evolution(p.tau_f / 2, p.dt()));
    w.append(make_primitive(0.0, p.tau_d, p.ahp, off, "x"));
    w.append(free_evolution(p.tau_f, p.dt()));
    w.append(make_primitive(pi / 2, p.tau_d, p.ahp, -off, "y"));
    w.append(free_evolution(p.tau_f / 2, p.dt()));
  }
  return w;
}

inline Waveform repeat(const Waveform& w, std::size_t n) {
  Waveform out;
  out.dt = w.dt;
  for (std::size_t i = 0; i < n; ++i) out.append(w);
  return out;
}

enum class Quadrature { I, Q };

// Closing phases: I maps +x back to +z, Q maps +y to +z.
inline double closing_phase(Quadrature q) { return q == Quadrature::I ? pi : 1.5 * pi; }

// Sensing phase convention: a core rotation exp(-i phi S^z) reads I = cos(phi), Q = sin(phi).
inline Waveform make_sensing_wrap(const Waveform& core, Quadrature q, const AhpSpec& ahp) {
  Waveform w;
  w.dt = ahp.dt;
  w.append(make_ahp(ahp, AhpDirection::Open, 0.0));
  w.append(core);
  w.append(make_ahp(ahp, AhpDirection::Close, closing_phase(q)));
  return w;
}

inline Waveform ideal_z_rotation(double angle, double dt) {
  Waveform w;
  w.dt = dt;
  w.rotations.push_back({0, Vec3::UnitZ(), angle});
  return w;
}

inline SegmentKind kind_at(const Waveform& w, std::size_t i) {
  SegmentKind k = SegmentKind::FREE;
  for (const auto& m : w.markers) {
    if (m.start > i) break;
    k = m.kind;
  }
  return k;
}

inline void export_waveform_csv(const Waveform& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "t_s,ax,ay,detuning_rad_s,segment_kind\n";
  out << std::setprecision(12);
  std::size_t mi = 0;
  SegmentKind k = SegmentKind::FREE;
  for (std::size_t i = 0; i < w.size(); ++i) {
    while (mi < w.markers.size() && w.markers[mi].start <= i) k = w.markers[mi++].kind;
    out << w.dt * static_cast<double>(i) << ',' << w.ax[i] << ',' << w.ay[i] << ',' << w.detuning[i] << ','
        << segment_name(k) << '\n';
  }
}

}  // namespace molsense
