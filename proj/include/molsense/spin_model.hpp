#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "molsense/numerics.hpp"

namespace molsense {

namespace codata {
inline constexpr double mu0 = 1.25663706212e-6;     // T m / A
inline constexpr double hbar = 1.054571817e-34;     // J s
inline constexpr double mu_B = 9.2740100783e-24;    // J / T
inline constexpr double g_e = 2.00231930436256;
inline constexpr double angstrom = 1e-10;
}  // namespace codata

enum class Species { H1, C13 };

inline std::string species_name(Species s) { return s == Species::H1 ? "H1" : "C13"; }

inline Species parse_species(const std::string& s) {
  if (s == "H1" || s == "H" || s == "1H") return Species::H1;
  if (s == "C13" || s == "C" || s == "13C") return Species::C13;
  throw ConfigError("unknown nuclear species '" + s + "'");
}

inline const char* species_element(Species s) { return s == Species::H1 ? "H" : "C"; }

struct GyroTable {
  double gamma_e = two_pi * 28.025e9;
  double gamma_H = two_pi * 42.6e6;
  double gamma_C = two_pi * 10.7084e6;
  double B0 = 0.330;

  void validate() const {
    if (!(gamma_e > 0 && gamma_H > 0 && gamma_C > 0 && B0 > 0))
      throw ConfigError("GyroTable: all entries must be positive");
  }
  double gamma(Species s) const { return s == Species::H1 ? gamma_H : gamma_C; }
  // Larmor frequencies in Hz.
  double nu_e() const { return gamma_e * B0 / two_pi; }
  double nu(Species s) const { return gamma(s) * B0 / two_pi; }
};

struct NucleusSpec {
  Species species = Species::H1;
  double A_iso = 0.0;    // rad/s
  double A_aniso = 0.0;  // rad/s
  double theta = 0.0;    // rad, principal axis vs static field
  std::optional<Vec3> position;  // m, relative to the electron
};

struct Hyperfine {
  double A0 = 0.0;         // rad/s
  double A1 = 0.0;         // rad/s, magnitude
  double A1_signed = 0.0;  // rad/s
};

inline Hyperfine hyperfine_secular(const NucleusSpec& n) {
  const double c = std::cos(n.theta);
  Hyperfine h;
  h.A0 = n.A_iso + n.A_aniso * (1.0 - 3.0 * c * c);
  h.A1_signed = 1.5 * n.A_aniso * std::sin(2.0 * n.theta);
  h.A1 = std::abs(h.A1_signed);
  return h;
}

// mu0 hbar gamma_n gamma_e / (4 pi r^3), rad/s.
inline double point_dipole_aniso(double r, const GyroTable& g, Species s) {
  if (!(r > 0.5 * codata::angstrom)) throw Error("point_dipole_aniso: distance below 0.5 Angstrom");
  return codata::mu0 / (4.0 * pi) * codata::hbar * g.gamma(s) * g.gamma_e / (r * r * r);
}

inline void validate_nucleus(const NucleusSpec& n, const GyroTable& g) {
  if (n.position) {
    const double ref = point_dipole_aniso(n.position->norm(), g, n.species);
    if (std::abs(n.A_aniso - ref) > 1e-9 * std::abs(ref))
      throw ConfigError("NucleusSpec: A_aniso inconsistent with point-dipole value from position");
  }
}

// Electron-nucleus point-dipole coupling seen along unit field direction b.
inline NucleusSpec point_dipole_nucleus(const Vec3& r, const Vec3& b, const GyroTable& g, Species s) {
  NucleusSpec n;
  n.species = s;
  n.position = r;
  n.A_aniso = point_dipole_aniso(r.norm(), g, s);
  n.theta = std::acos(std::clamp(r.normalized().dot(b.normalized()), -1.0, 1.0));
  return n;
}

struct DipolarCoupling {
  std::size_t j = 0;
  std::size_t k = 1;
  double D = 0.0;  // rad/s
};

struct SpinSystem {
  std::size_t n_electrons = 1;
  std::vector<double> offsets;              // rad/s per electron
  std::vector<DipolarCoupling> couplings;   // j < k
  std::vector<NucleusSpec> nuclei;
  std::vector<double> nuclear_larmor;       // rad/s per nucleus, Zeeman term -w I^z

  std::size_t n_sites() const { return n_electrons + nuclei.size(); }
  std::size_t dim() const { return std::size_t{1} << n_sites(); }

  void validate() const {
    if (n_electrons < 1) throw ConfigError("SpinSystem: need at least one electron");
    if (n_sites() > 12) throw ConfigError("SpinSystem: dimension exceeds 2^12");
    if (!offsets.empty() && offsets.size() != n_electrons)
      throw ConfigError("SpinSystem: offsets size mismatch");
    for (const auto& c : couplings)
      if (!(c.j < c.k && c.k < n_electrons)) throw ConfigError("SpinSystem: coupling indices must satisfy j<k<n");
    if (!nuclear_larmor.empty() && nuclear_larmor.size() != nuclei.size())
      throw ConfigError("SpinSystem: nuclear_larmor size mismatch");
  }

  CMatrix electron_op(const CMatrix& op, std::size_t j) const { return embed(op, j, n_sites()); }
  CMatrix nucleus_op(const CMatrix& op, std::size_t l) const { return embed(op, n_electrons + l, n_sites()); }

  CMatrix total_electron(const CMatrix& op) const {
    CMatrix m = CMatrix::Zero(dim(), dim());
    for (std::size_t j = 0; j < n_electrons; ++j) m += electron_op(op, j);
    return m;
  }
};

inline SpinSystem single_electron() { return SpinSystem{}; }

inline SpinSystem electron_pair(double D) {
  SpinSystem s;
  s.n_electrons = 2;
  s.couplings.push_back({0, 1, D});
  return s;
}

inline CMatrix build_offset_h(const SpinSystem& sys) {
  sys.validate();
  CMatrix h = CMatrix::Zero(sys.dim(), sys.dim());
  for (std::size_t j = 0; j < sys.offsets.size(); ++j)
    h -= sys.offsets[j] * sys.electron_op(spin_half::sz(), j);
  return h;
}

inline CMatrix build_dipolar_h(const SpinSystem& sys) {
  sys.validate();
  if (sys.n_electrons < 2) throw ConfigError("build_dipolar_h: need two or more electrons");
  CMatrix h = CMatrix::Zero(sys.dim(), sys.dim());
  for (const auto& c : sys.couplings) {
    CMatrix zz = sys.electron_op(spin_half::sz(), c.j) * sys.electron_op(spin_half::sz(), c.k);
    CMatrix dot = sys.electron_op(spin_half::sx(), c.j) * sys.electron_op(spin_half::sx(), c.k) +
                  sys.electron_op(spin_half::sy(), c.j) * sys.electron_op(spin_half::sy(), c.k) + zz;
    h += c.D * (3.0 * zz - dot);
  }
  return h;
}

inline CMatrix build_control_h(const SpinSystem& sys, double ax, double ay, double u) {
  if (std::hypot(ax, ay) > 1.0 + 1e-12) throw Error("build_control_h: |a| > 1");
  return two_pi * u * (ax * sys.total_electron(spin_half::sx()) + ay * sys.total_electron(spin_half::sy()));
}

// Nuclear Zeeman plus secular hyperfine to electron 0.
inline CMatrix build_nuclear_h(const SpinSystem& sys) {
  sys.validate();
  CMatrix h = CMatrix::Zero(sys.dim(), sys.dim());
  if (sys.nuclei.empty()) return h;
  const CMatrix sz0 = sys.electron_op(spin_half::sz(), 0);
  for (std::size_t l = 0; l < sys.nuclei.size(); ++l) {
    const Hyperfine hf = hyperfine_secular(sys.nuclei[l]);
    const CMatrix iz = sys.nucleus_op(spin_half::sz(), l);
    const CMatrix ix = sys.nucleus_op(spin_half::sx(), l);
    if (!sys.nuclear_larmor.empty()) h -= sys.nuclear_larmor[l] * iz;
    h += hf.A0 * iz * sz0 + hf.A1_signed * ix * sz0;
  }
  return h;
}

inline CMatrix build_static_h(const SpinSystem& sys) {
  CMatrix h = build_offset_h(sys) + build_nuclear_h(sys);
  if (sys.n_electrons >= 2) h += build_dipolar_h(sys);
  return h;
}

// Secular electron-electron coupling from positions, field along b.
inline double dipolar_coupling(const Vec3& r1, const Vec3& r2, const Vec3& b, const GyroTable& g) {
  const Vec3 d = r2 - r1;
  const double r = d.norm();
  if (!(r > 0.5 * codata::angstrom)) throw Error("dipolar_coupling: distance below 0.5 Angstrom");
  const double c = d.normalized().dot(b.normalized());
  return -codata::mu0 / (4.0 * pi) * g.gamma_e * g.gamma_e * codata::hbar * (1.0 - 3.0 * c * c) / (2.0 * r * r * r);
}

struct RabiDistribution {
  std::vector<double> u;  // Hz
  std::vector<double> w;

  static RabiDistribution delta(double u0) { return {{u0}, {1.0}}; }

  void validate() const {
    if (u.empty() || u.size() != w.size()) throw ConfigError("RabiDistribution: empty or ragged");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (w[i] < 0) throw ConfigError("RabiDistribution: negative weight");
      if (i > 0 && !(u[i] > u[i - 1])) throw ConfigError("RabiDistribution: u must be strictly increasing");
      s += w[i];
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("RabiDistribution: weights do not sum to 1");
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) m += u[i] * w[i];
    return m;
  }

  // Weighted median.
  double center() const {
    double c = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      c += w[i];
      if (c >= 0.5) return u[i];
    }
    return u.back();
  }

  // Coarse representation with n equal-weight-mass bins, each at its conditional mean.
  RabiDistribution coarse(std::size_t n) const {
    if (n == 0) throw ConfigError("RabiDistribution::coarse: n must be positive");
    if (n >= u.size()) return *this;
    RabiDistribution out;
    double acc = 0.0, bw = 0.0, bu = 0.0;
    std::size_t bin = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      double rem = w[i];
      while (rem > 0) {
        const double edge = static_cast<double>(bin + 1) / static_cast<double>(n);
        const double take = (bin + 1 == n) ? rem : std::min(rem, edge - acc);
        bw += take;
        bu += take * u[i];
        acc += take;
        rem -= take;
        if (bin + 1 < n && acc >= edge - 1e-15) {
          if (bw > 0) {
            out.u.push_back(bu / bw);
            out.w.push_back(bw);
          }
          bw = bu = 0.0;
          ++bin;
        }
        if (take <= 0) break;
      }
    }
    if (bw > 0) {
      out.u.push_back(bu / bw);
      out.w.push_back(bw);
    }
    // merge coincident bins (single-sample distributions)
    RabiDistribution m;
    for (std::size_t i = 0; i < out.u.size(); ++i) {
      if (!m.u.empty() && !(out.u[i] > m.u.back())) {
        m.w.back() += out.w[i];
      } else {
        m.u.push_back(out.u[i]);
        m.w.push_back(out.w[i]);
      }
    }
    double s = 0.0;
    for (double x : m.w) s += x;
    for (double& x : m.w) x /= s;
    return m;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline bool parse_double(const std::string& s, double& v) {
  try {
    std::size_t pos = 0;
    v = std::stod(s, &pos);
    return pos == s.size() && std::isfinite(v);
  } catch (...) {
    return false;
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

inline RabiDistribution load_rabi_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::pair<double, double>> rows;
  std::string line;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cols = detail::split(t, ',');
    double a = 0, b = 0;
    if (cols.size() != 2 || !detail::parse_double(cols[0], a) || !detail::parse_double(cols[1], b)) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed Rabi row");
    }
    first = false;
    if (b < 0) throw ConfigError(path + ":" + std::to_string(lineno) + ": negative weight");
    rows.emplace_back(a, b);
  }
  std::sort(rows.begin(), rows.end());
  RabiDistribution d;
  double total = 0.0;
  for (const auto& [u, w] : rows) {
    if (!d.u.empty() && u == d.u.back()) {
      d.w.back() += w;
    } else {
      d.u.push_back(u);
      d.w.push_back(w);
    }
    total += w;
  }
  if (!(total > 0)) throw ConfigError(path + ": zero total weight");
  for (double& w : d.w) w /= total;
  d.validate();
  return d;
}

struct Atom {
  std::string element;
  Vec3 position;  // m
};

struct MoleculeGeometry {
  std::vector<Atom> atoms;
  Vec3 electron_site = Vec3::Zero();

  std::size_t count(const std::string& el) const {
    return static_cast<std::size_t>(std::count_if(atoms.begin(), atoms.end(), [&](const Atom& a) { return a.element == el; }));
  }

  // Positions of one element relative to the electron, in file order.
  std::vector<Vec3> relative_positions(const std::string& el) const {
    std::vector<Vec3> out;
    for (const auto& a : atoms)
      if (a.element == el) out.push_back(a.position - electron_site);
    return out;
  }

  // Uniform dilation about the electron site.
  MoleculeGeometry dilated(double f) const {
    MoleculeGeometry g = *this;
    for (auto& a : g.atoms) a.position = electron_site + f * (a.position - electron_site);
    return g;
  }
};

inline const std::vector<std::string>& known_elements() {
  static const std::vector<std::string> els = {"H", "C", "N", "O", "S", "Na"};
  return els;
}

inline MoleculeGeometry load_xyz(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ":1: missing atom count");
  double count_d = 0;
  if (!detail::parse_double(detail::trim(line), count_d) || count_d < 1 || count_d != std::floor(count_d))
    throw ConfigError(path + ":1: malformed atom count");
  const auto count = static_cast<std::size_t>(count_d);
  if (!std::getline(in, line)) throw ConfigError(path + ":2: missing comment line");
  MoleculeGeometry g;
  const auto pos = line.find("electron:");
  if (pos != std::string::npos) {
    std::istringstream is(line.substr(pos + 9));
    double x, y, z;
    if (!(is >> x >> y >> z)) throw ConfigError(path + ":2: malformed electron site");
    g.electron_site = Vec3(x, y, z) * codata::angstrom;
  }
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    std::istringstream is(t);
    std::string el;
    double x, y, z;
    std::string extra;
    if (!(is >> el >> x >> y >> z) || (is >> extra))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed atom line");
    const auto& k = known_elements();
    if (std::find(k.begin(), k.end(), el) == k.end())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown element '" + el + "'");
    g.atoms.push_back({el, Vec3(x, y, z) * codata::angstrom});
  }
  if (g.atoms.size() != count)
    throw ConfigError(path + ": atom count " + std::to_string(g.atoms.size()) + " != header " + std::to_string(count));
  return g;
}

struct HyperfineEntry {
  std::size_t site_index = 0;
  double A_iso = 0.0;    // rad/s
  double A_aniso = 0.0;  // rad/s
};

// CSV site_index,a_iso_hz,a_aniso_hz; values converted to rad/s.
inline std::vector<HyperfineEntry> load_hyperfine_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<HyperfineEntry> out;
  std::string line;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cols = detail::split(t, ',');
    double i = 0, a = 0, b = 0;
    if (cols.size() != 3 || !detail::parse_double(cols[0], i) || !detail::parse_double(cols[1], a) ||
        !detail::parse_double(cols[2], b) || i < 0 || i != std::floor(i)) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed hyperfine row");
    }
    first = false;
    out.push_back({static_cast<std::size_t>(i), two_pi * a, two_pi * b});
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.site_index < y.site_index; });
  for (std::size_t k = 1; k < out.size(); ++k)
    if (out[k].site_index == out[k - 1].site_index) throw ConfigError(path + ": duplicate site index");
  return out;
}

}  // namespace molsense
