#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "molsense/numerics.hpp"
#include "molsense/propagation.hpp"
#include "molsense/sequence.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

struct PhiMetrics {
  double phi_parallel = 0.0;
  double phi_perp = 0.0;
  double phi_abs = 0.0;
};

// Zeroth-order toggling-frame average of h under the control-only propagator.
// Each constant step is integrated exactly in the eigenbasis of its Hamiltonian.
inline CMatrix avg_h0(const Program& prog, const CMatrix& h, const SpinSystem& sys, double u) {
  if (h.rows() != static_cast<Eigen::Index>(sys.dim()) || h.cols() != h.rows())
    throw Error("avg_h0: dimension mismatch between h and system");
  if (hermitian_defect(h) > 1e-10) throw Error("avg_h0: h is not Hermitian");
  if (prog.duration <= 0) return h;
  const ControlOps ops(sys);
  const std::size_t n = sys.dim();
  CMatrix U = identity(n);
  CMatrix acc = CMatrix::Zero(n, n);
  for (const auto& it : prog.items) {
    if (it.is_rotation) {
      U = ops.rotation(it.rot) * U;
      continue;
    }
    const double d = it.step.duration;
    const EigenSystem es = eig_hermitian(ops.hamiltonian(it.step, u), 1e-10);
    const CMatrix hp = es.vectors.adjoint() * h * es.vectors;
    CMatrix f(n, n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        f(a, b) = hp(a, b) * phase_integral(es.values(a) - es.values(b), d);
    acc += U.adjoint() * (es.vectors * f * es.vectors.adjoint()) * U;
    U = step_propagator(es, d) * U;
  }
  return acc / prog.duration;
}

inline CMatrix avg_h0(const Waveform& w, const CMatrix& h, const SpinSystem& sys, double u) {
  return avg_h0(to_program(w), h, sys, u);
}

inline PhiMetrics phi_metrics(const CMatrix& hbar, const CMatrix& h) {
  const double n2 = hs_inner(h, h).real();
  if (!(n2 > 0)) throw Error("phi_metrics: zero h");
  PhiMetrics m;
  m.phi_parallel = hs_inner(h, hbar).real() / n2;
  m.phi_perp = (hbar - m.phi_parallel * h).norm() / std::sqrt(n2);
  m.phi_abs = std::hypot(m.phi_parallel, m.phi_perp);
  return m;
}

// Calibration proxy: two electrons with D = 2 pi 100 kHz.
inline SpinSystem calibration_pair(double D = two_pi * 100e3) { return electron_pair(D); }

inline Program primitive_program(double axis_phase, double tau_d, const AhpSpec& ahp, double extra = 0.0) {
  return to_program(make_primitive(axis_phase, tau_d, ahp, extra));
}

// XYXYd block with continuous tau_f (not restricted to the dt grid).
inline Program block_program(double tau_d, double tau_f, const AhpSpec& ahp, double offset = 0.0) {
  const Program px = primitive_program(0.0, tau_d, ahp, offset);
  const Program py = primitive_program(pi / 2, tau_d, ahp, -offset);
  Program b;
  for (int rep = 0; rep < 2; ++rep) {
    b.add_step(tau_f / 2);
    b.append(px);
    b.add_step(tau_f);
    b.append(py);
    b.add_step(tau_f / 2);
  }
  return b;
}

inline std::vector<std::pair<double, PhiMetrics>> primitive_phi_sweep(double tau_d, const AhpSpec& ahp,
                                                                      const SpinSystem& sys,
                                                                      const std::vector<double>& u_grid) {
  if (sys.n_electrons != 2) throw ConfigError("primitive_phi_sweep: needs a 2-electron system");
  const CMatrix hd = build_dipolar_h(sys);
  if (hd.norm() == 0) throw ConfigError("primitive_phi_sweep: zero dipolar coupling");
  const Program p = primitive_program(0.0, tau_d, ahp);
  std::vector<std::pair<double, PhiMetrics>> out;
  for (double u : u_grid) out.emplace_back(u, phi_metrics(avg_h0(p, hd, sys, u), hd));
  return out;
}

inline PhiMetrics block_phi(double tau_d, double tau_f, const AhpSpec& ahp, const SpinSystem& sys, double u,
                            const CMatrix& h) {
  return phi_metrics(avg_h0(block_program(tau_d, tau_f, ahp), h, sys, u), h);
}

struct CalibrationResult {
  double tau_f = 0.0;      // snapped to the grid
  double tau_f_raw = 0.0;  // bisection root
  double phi_at_snapped = 0.0;
};

inline CalibrationResult calibrate_tau_f(double tau_d, const AhpSpec& ahp, const SpinSystem& sys, double u_center,
                                         double tol = 0.1e-9) {
  if (!(tau_d > 0)) throw ConfigError("calibrate_tau_f: tau_d must be positive");
  const CMatrix hd = build_dipolar_h(sys);
  auto f = [&](double tf) { return block_phi(tau_d, tf, ahp, sys, u_center, hd).phi_parallel; };
  double lo = 0.2 * tau_d, hi = 0.8 * tau_d;
  double flo = f(lo), fhi = f(hi);
  if (flo * fhi > 0)
    throw Error("calibrate_tau_f: no sign change in bracket (phi_par = " + std::to_string(flo) + ", " +
                std::to_string(fhi) + ")");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  CalibrationResult r;
  r.tau_f_raw = 0.5 * (lo + hi);
  const double q = 2 * ahp.dt;  // tau_f/2 must sit on the grid
  r.tau_f = std::round(r.tau_f_raw / q) * q;
  r.phi_at_snapped = f(r.tau_f);
  return r;
}

inline PhiMetrics block_offset_suppression(const Waveform& w, const SpinSystem& sys, double u) {
  const CMatrix h = build_offset_h(sys);
  return phi_metrics(avg_h0(w, h, sys, u), h);
}

// Fixed-T retiming: tau_d + tau_f = (T - 8 t_ahp)/4 on the dt grid, tau_d chosen to null
// the dipolar Phi_parallel of the block at u.
struct Retimed {
  double tau_d = 0.0;
  double tau_f = 0.0;
  double T = 0.0;
};

inline Retimed retime_for_block(double T, const AhpSpec& ahp, const SpinSystem& sys, double u) {
  const double q = 2 * ahp.dt;
  const double S = (T - 8 * ahp.t_ahp()) / 4;
  const double S_grid = std::round(S / ahp.dt) * ahp.dt;
  if (!(S_grid > 4 * q)) throw ConfigError("retime_for_block: block duration too short");
  // Phi_parallel is close to linear in tau_d at fixed S; one secant step then a local grid scan.
  const CMatrix hd = build_dipolar_h(sys);
  auto phi = [&](double td) { return block_phi(td, S_grid - td, ahp, sys, u, hd).phi_parallel; };
  const double a = std::round(S_grid * 0.5 / ahp.dt) * ahp.dt, b = std::round(S_grid * 0.75 / ahp.dt) * ahp.dt;
  const double fa = phi(a), fb = phi(b);
  double guess = a - fa * (b - a) / (fb - fa);
  Retimed best;
  double best_abs = 1e300;
  const double base = std::round((S_grid - guess) / q) * q;  // tau_f candidate on 2dt grid
  for (int k = -2; k <= 2; ++k) {
    const double tf = base + k * q;
    const double td = S_grid - tf;
    if (tf <= 0 || td <= 0) continue;
    const double v = std::abs(phi(td));
    if (v < best_abs) {
      best_abs = v;
      best = {td, tf, block_duration(td, tf, ahp.t_ahp())};
    }
  }
  if (best_abs == 1e300) throw ConfigError("retime_for_block: no admissible timing");
  return best;
}

}  // namespace molsense
