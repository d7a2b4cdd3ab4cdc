#pragma once

#include <variant>
#include <vector>

#include "molsense/numerics.hpp"
#include "molsense/propagation.hpp"
#include "molsense/sequence.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

struct FreeEvolution {
  double duration = 0.0;
};

// Removes electron transverse coherence (ensemble dephasing during a storage interval).
struct ElectronDephasing {};

struct ScheduleItem {
  std::variant<Waveform, FreeEvolution, ElectronDephasing> what;
  std::size_t repeat = 1;
};

struct SimTask {
  SpinSystem sys;
  std::vector<ScheduleItem> schedule;
  CMatrix initial;
  CMatrix observable;
  double u = 55e6;
  double dt = 1e-9;
};

inline CMatrix dephase_electrons(const SpinSystem& sys, const CMatrix& rho) {
  CMatrix r = rho;
  for (std::size_t j = 0; j < sys.n_electrons; ++j) {
    const CMatrix z = 2.0 * sys.electron_op(spin_half::sz(), j);
    r = 0.5 * (r + z * r * z);
  }
  return r;
}

inline double propagate(const SimTask& task) {
  task.sys.validate();
  const std::size_t n = task.sys.dim();
  if (task.initial.rows() != static_cast<Eigen::Index>(n) || task.observable.rows() != static_cast<Eigen::Index>(n))
    throw ConfigError("propagate: operator dimension mismatch");
  const CMatrix h0 = build_static_h(task.sys);
  CMatrix rho = task.initial;
  for (const auto& item : task.schedule) {
    if (std::holds_alternative<ElectronDephasing>(item.what)) {
      rho = dephase_electrons(task.sys, rho);
      continue;
    }
    CMatrix U;
    if (const auto* w = std::get_if<Waveform>(&item.what)) {
      if (std::abs(w->dt - task.dt) > 1e-18) throw ConfigError("propagate: waveform dt differs from task dt");
      U = waveform_propagator(*w, task.sys, task.u);
    } else {
      const double d = std::get<FreeEvolution>(item.what).duration;
      grid_steps(d, task.dt, "free evolution");
      U = expm_hermitian(h0, d);
    }
    U = matrix_power(U, item.repeat);
    rho = U * rho * U.adjoint();
  }
  const cplx num = (task.observable * rho).trace();
  const double den = std::sqrt((task.observable * task.observable).trace().real() *
                               (task.initial * task.initial).trace().real());
  return num.real() / den;
}

inline SpinSystem electron_with_bath(const std::vector<NucleusSpec>& nuclei, const std::vector<double>& larmor) {
  SpinSystem s;
  s.nuclei = nuclei;
  s.nuclear_larmor = larmor;
  if (nuclei.size() > 3) throw ConfigError("brute_sim: at most 3 nuclei per electron");
  s.validate();
  return s;
}

// Wrapped XYXYd-N echo with cached pieces, reusable over N.
class EchoEngine {
 public:
  EchoEngine(const SpinSystem& sys, const XyxydParams& p, double u, Quadrature q = Quadrature::I)
      : sys_(sys), sz_(sys.electron_op(spin_half::sz(), 0)) {
    open_ = waveform_propagator(make_ahp(p.ahp, AhpDirection::Open, 0.0), sys, u);
    block_ = waveform_propagator(make_xyxyd(p), sys, u);
    close_ = waveform_propagator(make_ahp(p.ahp, AhpDirection::Close, closing_phase(q)), sys, u);
  }

  double correlation_at(std::size_t N) const {
    const CMatrix U = close_ * matrix_power(block_, N) * open_;
    return correlation(U, sz_, sz_);
  }

  std::vector<double> curve(const std::vector<std::size_t>& Ns) const {
    std::vector<double> out;
    for (auto N : Ns) out.push_back(correlation_at(N));
    return out;
  }

  const CMatrix& block() const { return block_; }

 private:
  SpinSystem sys_;
  CMatrix sz_;
  CMatrix open_, block_, close_;
};

// Echo for the bath relative to the nucleus-free echo of the same sequence.
inline double brute_echo(const std::vector<NucleusSpec>& nuclei, const std::vector<double>& larmor, const XyxydParams& p,
                         double u) {
  const EchoEngine with(electron_with_bath(nuclei, larmor), p, u);
  const EchoEngine bare(single_electron(), p, u);
  return with.correlation_at(p.N) / bare.correlation_at(p.N);
}

// Two Q-read XYXYd-N blocks with dephased storage for time t between them.
inline std::vector<double> brute_corr_spec(const std::vector<NucleusSpec>& nuclei, const std::vector<double>& larmor,
                                           const XyxydParams& p, double u, const std::vector<double>& t_grid) {
  const SpinSystem sys = electron_with_bath(nuclei, larmor);
  const CMatrix sz = sys.electron_op(spin_half::sz(), 0);
  const CMatrix open = waveform_propagator(make_ahp(p.ahp, AhpDirection::Open, 0.0), sys, u);
  const CMatrix block = waveform_propagator(make_xyxyd(p), sys, u);
  const CMatrix close = waveform_propagator(make_ahp(p.ahp, AhpDirection::Close, closing_phase(Quadrature::Q)), sys, u);
  const CMatrix W = close * matrix_power(block, p.N) * open;
  const CMatrix rho1 = dephase_electrons(sys, W * sz * W.adjoint());
  const EigenSystem es = eig_hermitian(build_static_h(sys), 1e-10);
  const double norm = (sz * sz).trace().real();
  std::vector<double> out;
  for (double t : t_grid) {
    grid_steps(t, p.dt(), "correlation delay");
    const CMatrix F = step_propagator(es, t);
    const CMatrix U = W * F;
    const CMatrix rho = U * rho1 * U.adjoint();
    out.push_back((sz * rho).trace().real() / norm);
  }
  return out;
}

}  // namespace molsense
