#pragma once

#include <vector>

#include "molsense/numerics.hpp"
#include "molsense/sequence.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

// A maximal run of identical samples.
struct ControlStep {
  double t0 = 0.0;
  double duration = 0.0;
  double ax = 0.0, ay = 0.0, det = 0.0;
};

// Visits rotations and merged constant steps in time order.
template <class OnStep, class OnRotation>
void walk_waveform(const Waveform& w, OnStep&& on_step, OnRotation&& on_rotation) {
  w.validate();
  std::size_t r = 0;
  std::size_t i = 0;
  const std::size_t n = w.size();
  while (i <= n) {
    while (r < w.rotations.size() && w.rotations[r].index == i) on_rotation(w.rotations[r++]);
    if (i == n) break;
    std::size_t stop = n;
    if (r < w.rotations.size()) stop = std::min(stop, w.rotations[r].index);
    std::size_t j = i + 1;
    while (j < stop && w.ax[j] == w.ax[i] && w.ay[j] == w.ay[i] && w.detuning[j] == w.detuning[i]) ++j;
    on_step(ControlStep{w.dt * static_cast<double>(i), w.dt * static_cast<double>(j - i), w.ax[i], w.ay[i], w.detuning[i]});
    i = j;
  }
  if (r < w.rotations.size()) throw Error("walk_waveform: rotation index beyond waveform end");
}

struct ControlOps {
  CMatrix sx, sy, sz;

  explicit ControlOps(const SpinSystem& sys)
      : sx(sys.total_electron(spin_half::sx())),
        sy(sys.total_electron(spin_half::sy())),
        sz(sys.total_electron(spin_half::sz())) {}

  CMatrix hamiltonian(const ControlStep& s, double u) const {
    if (std::hypot(s.ax, s.ay) > 1.0 + 1e-12) throw Error("control amplitude exceeds 1");
    return two_pi * u * (s.ax * sx + s.ay * sy) - s.det * sz;
  }

  CMatrix rotation(const IdealRotation& r) const {
    const Vec3 n = r.axis.normalized();
    return expm_hermitian(n.x() * sx + n.y() * sy + n.z() * sz, r.angle);
  }
};

// Time-ordered list of constant steps and instantaneous rotations.
struct ProgramItem {
  ControlStep step;
  bool is_rotation = false;
  IdealRotation rot;
};

struct Program {
  std::vector<ProgramItem> items;
  double duration = 0.0;

  void add_step(double d, double ax = 0.0, double ay = 0.0, double det = 0.0) {
    if (d < 0) throw Error("Program: negative step");
    if (d == 0) return;
    items.push_back({ControlStep{duration, d, ax, ay, det}, false, {}});
    duration += d;
  }
  void add_rotation(const IdealRotation& r) { items.push_back({ControlStep{duration, 0, 0, 0, 0}, true, r}); }
  void append(const Program& o) {
    for (const auto& it : o.items) {
      if (it.is_rotation) {
        add_rotation(it.rot);
      } else {
        add_step(it.step.duration, it.step.ax, it.step.ay, it.step.det);
      }
    }
  }
};

inline Program to_program(const Waveform& w) {
  Program p;
  walk_waveform(
      w, [&](const ControlStep& s) { p.add_step(s.duration, s.ax, s.ay, s.det); },
      [&](const IdealRotation& r) { p.add_rotation(r); });
  return p;
}

inline CMatrix step_propagator(const EigenSystem& es, double d) {
  Eigen::VectorXcd ph(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) ph(i) = std::polar(1.0, -d * es.values(i));
  return es.vectors * ph.asDiagonal() * es.vectors.adjoint();
}

// Full propagator of the waveform; static terms from sys are included when requested.
inline CMatrix waveform_propagator(const Waveform& w, const SpinSystem& sys, double u, bool with_static = true) {
  const ControlOps ops(sys);
  const CMatrix h0 = with_static ? build_static_h(sys) : CMatrix::Zero(sys.dim(), sys.dim());
  CMatrix U = identity(sys.dim());
  walk_waveform(
      w,
      [&](const ControlStep& s) {
        const EigenSystem es = eig_hermitian(h0 + ops.hamiltonian(s, u), 1e-10);
        U = step_propagator(es, s.duration) * U;
      },
      [&](const IdealRotation& r) { U = ops.rotation(r) * U; });
  return U;
}

// Tr[O U rho U^dagger] / sqrt(Tr[O^2] Tr[rho^2]).
inline double correlation(const CMatrix& U, const CMatrix& init, const CMatrix& obs) {
  const cplx num = (obs * U * init * U.adjoint()).trace();
  const double den = std::sqrt((obs * obs).trace().real() * (init * init).trace().real());
  return num.real() / den;
}

inline CMatrix matrix_power(CMatrix base, std::size_t n) {
  CMatrix out = identity(static_cast<std::size_t>(base.rows()));
  while (n > 0) {
    if (n & 1) out = base * out;
    base = base * base;
    n >>= 1;
  }
  return out;
}

}  // namespace molsense
