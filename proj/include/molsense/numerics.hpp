#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

namespace molsense {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

// Largest Hilbert dimension any builder will accept.
inline constexpr std::size_t max_dimension = 4096;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: files, parameters, flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Normalized sinc, sin(pi x)/(pi x).
inline double sinc(double x) {
  if (std::abs(x) < 1e-8) {
    const double y = pi * x;
    return 1.0 - y * y / 6.0;
  }
  return std::sin(pi * x) / (pi * x);
}

// Integral of exp(i w s) for s in [0, d].
inline cplx phase_integral(double w, double d) {
  const double x = 0.5 * w * d;
  double s;
  if (std::abs(x) < 1e-6) {
    s = 1.0 - x * x / 6.0;
  } else {
    s = std::sin(x) / x;
  }
  return d * s * std::polar(1.0, x);
}

inline CMatrix identity(std::size_t n) { return CMatrix::Identity(n, n); }

inline CMatrix kron_list(const std::vector<CMatrix>& factors) {
  if (factors.empty()) throw Error("kron_list: empty factor list");
  std::size_t dim = 1;
  for (const auto& f : factors) {
    if (f.rows() != f.cols()) throw Error("kron_list: non-square factor");
    dim *= static_cast<std::size_t>(f.rows());
    if (dim > max_dimension) throw Error("kron_list: dimension exceeds cap");
  }
  CMatrix out = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    CMatrix next = Eigen::kroneckerProduct(out, factors[i]).eval();
    out = std::move(next);
  }
  return out;
}

inline double hermitian_defect(const CMatrix& m) {
  const double n = m.norm();
  if (n == 0.0) return 0.0;
  return (m - m.adjoint()).norm() / n;
}

struct EigenSystem {
  Eigen::VectorXd values;
  CMatrix vectors;
};

inline EigenSystem eig_hermitian(const CMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) throw Error("eig_hermitian: non-square matrix");
  if (hermitian_defect(m) > tol) throw Error("eig_hermitian: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
  if (es.info() != Eigen::Success) throw Error("eig_hermitian: eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

// exp(-i scale M) for Hermitian M.
inline CMatrix expm_hermitian(const CMatrix& m, double scale) {
  const EigenSystem es = eig_hermitian(m);
  const Eigen::Index n = m.rows();
  Eigen::VectorXcd ph(n);
  for (Eigen::Index i = 0; i < n; ++i) ph(i) = std::polar(1.0, -scale * es.values(i));
  return es.vectors * ph.asDiagonal() * es.vectors.adjoint();
}

// Tr(A^dagger B).
inline cplx hs_inner(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("hs_inner: dimension mismatch");
  return (a.adjoint() * b).trace();
}

inline double unitarity_defect(const CMatrix& u) {
  return (u.adjoint() * u - identity(static_cast<std::size_t>(u.rows()))).norm();
}

namespace spin_half {

inline CMatrix sx() {
  CMatrix m(2, 2);
  m << 0.0, 0.5, 0.5, 0.0;
  return m;
}
inline CMatrix sy() {
  CMatrix m(2, 2);
  m << 0.0, cplx(0.0, -0.5), cplx(0.0, 0.5), 0.0;
  return m;
}
inline CMatrix sz() {
  CMatrix m(2, 2);
  m << 0.5, 0.0, 0.0, -0.5;
  return m;
}

}  // namespace spin_half

// Single-site operator placed at `site` among `n_sites` spin-1/2 sites.
inline CMatrix embed(const CMatrix& op, std::size_t site, std::size_t n_sites) {
  if (site >= n_sites) throw Error("embed: site index out of range");
  if ((std::size_t{1} << n_sites) > max_dimension) throw Error("embed: dimension exceeds cap");
  std::vector<CMatrix> f(n_sites, identity(2));
  f[site] = op;
  return kron_list(f);
}

}  // namespace molsense
