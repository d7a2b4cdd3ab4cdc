#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "molsense/nuc_sensing.hpp"
#include "molsense/sensitivity.hpp"
#include "molsense/spin_model.hpp"

namespace molsense {

using json = nlohmann::ordered_json;

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns, const std::string& comment = {})
      : path_(path), out_(path) {
    if (!out_) throw ConfigError("cannot write '" + path + "'");
    if (!comment.empty()) out_ << "# " << comment << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n" << std::flush;
    n_ = columns.size();
  }

  void row(const std::vector<double>& v) {
    if (v.size() != n_) throw Error("CsvWriter: column count mismatch in " + path_);
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << fmt_num(v[i]);
    out_ << "\n" << std::flush;
  }

  void raw(const std::string& line) { out_ << line << "\n" << std::flush; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t n_ = 0;
};

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline json frozen_constants(const GyroTable& g, const AhpSpec& a) {
  json c;
  c["gamma_e_rad_s_T"] = g.gamma_e;
  c["gamma_H_rad_s_T"] = g.gamma_H;
  c["gamma_C_rad_s_T"] = g.gamma_C;
  c["B0_T"] = g.B0;
  c["ahp"] = {{"duration_s", a.duration}, {"sweep_bandwidth_hz", a.sweep_bandwidth}, {"xi", a.xi},
              {"kappa", a.kappa}, {"dt_s", a.dt}, {"ideal", a.ideal}};
  c["electron_moment_J_T"] = electron_moment;
  c["noise_model"] = "sigma^2 = spin_var*tau0/min(tau0,taum) + 2 sm2 + sm2^2, sm2 = c_force/(NsR tau0)";
  return c;
}

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  json constants;
  json results;

  json to_json() const {
    json j;
    j["tool"] = "molsense";
    j["version"] = "1.0.0";
    j["command"] = command;
    j["args"] = args;
    std::string cat;
    json ins = json::array();
    for (const auto& p : inputs) {
      const std::string h = sha256_file(p);
      cat += h;
      ins.push_back({{"path", p}, {"sha256", h}});
    }
    j["inputs"] = ins;
    j["input_hash"] = sha256_hex(cat);
    j["seed"] = seed;
    j["constants"] = constants;
    json outs = json::array();
    for (const auto& p : outputs) outs.push_back({{"path", std::filesystem::path(p).filename().string()}, {"sha256", sha256_file(p)}});
    j["outputs"] = outs;
    j["results"] = results;
    return j;
  }
};

inline json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& v) {
  if (!j.contains(key)) return;
  try {
    v = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

struct BudgetConfig {
  SenseBudget budget;
  ReadoutParams readout;
  NoiseModel noise;
};

// Keys mirror SenseBudget / ReadoutParams fields with SI units.
inline BudgetConfig load_budget_config(const std::string& path) {
  const json j = load_json(path);
  BudgetConfig c;
  if (j.contains("budget")) {
    const json& b = j["budget"];
    get_opt(b, "T_s", c.budget.T);
    get_opt(b, "Gamma", c.budget.Gamma);
    get_opt(b, "T_d_s", c.budget.T_d);
    get_opt(b, "tau_ovh_s", c.budget.tau_ovh);
    get_opt(b, "tau_m_max_s", c.budget.tau_m_max);
    get_opt(b, "tau0_min_s", c.budget.tau0_min);
    get_opt(b, "tau0_max_s", c.budget.tau0_max);
    get_opt(b, "N_min", c.budget.N_min);
    get_opt(b, "N_max", c.budget.N_max);
    get_opt(b, "tau0_points", c.budget.tau0_points);
    get_opt(b, "taum_points", c.budget.taum_points);
  }
  if (j.contains("readout")) {
    const json& r = j["readout"];
    get_opt(r, "mu_J_T", c.readout.mu);
    get_opt(r, "D_duty", c.readout.D_duty);
    get_opt(r, "G_rms_T_m", c.readout.G_rms);
    double sqrt_sf = std::sqrt(c.readout.S_F);
    get_opt(r, "sqrt_S_F_N_rtHz", sqrt_sf);
    c.readout.S_F = sqrt_sf * sqrt_sf;
    get_opt(r, "N_s", c.readout.N_s);
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    get_opt(n, "id", c.noise.id);
    if (c.noise.id != "default") throw ConfigError("noise model '" + c.noise.id + "' is not registered");
    get_opt(n, "c_force", c.noise.params["c_force"]);
    get_opt(n, "spin_var", c.noise.params["spin_var"]);
  }
  c.budget.validate();
  c.readout.validate();
  return c;
}

// Paths inside the ensemble config are relative to the config file.
inline EnsembleConfig load_ensemble_config(const std::string& path, std::vector<std::string>* inputs = nullptr) {
  const json j = load_json(path);
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const auto r = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
    if (inputs) inputs->push_back(r.string());
    return r.string();
  };
  EnsembleConfig c;
  if (!j.contains("geometry")) throw ConfigError(path + ": missing 'geometry'");
  c.molecule = load_xyz(resolve(j["geometry"].get<std::string>()));
  if (j.contains("c13_hyperfine")) c.carbon_table = load_hyperfine_csv(resolve(j["c13_hyperfine"].get<std::string>()));
  if (j.contains("rabi")) c.rabi = load_rabi_csv(resolve(j["rabi"].get<std::string>()));
  get_opt(j, "occupancy_H", c.occupancy_H);
  get_opt(j, "occupancy_C", c.occupancy_C);
  get_opt(j, "strong_fraction", c.strong_fraction);
  get_opt(j, "n_orient", c.n_orient);
  get_opt(j, "rabi_bins", c.rabi_bins);
  get_opt(j, "n_draws", c.n_draws);
  get_opt(j, "seed", c.seed);
  get_opt(j, "n_max_criterion", c.n_max_criterion);
  get_opt(j, "coupled_threshold", c.coupled_threshold);
  get_opt(j, "lobe_H", c.lobe_H);
  get_opt(j, "lobe_C", c.lobe_C);
  double td = -1;
  get_opt(j, "T_d_s", td);
  if (td > 0) c.T_d = td;
  if (c.occupancy_H < 0 || c.occupancy_H > 1 || c.occupancy_C < 0 || c.occupancy_C > 1)
    throw ConfigError(path + ": occupancies must lie in [0, 1]");
  if (c.n_orient < 1 || c.n_draws < 1) throw ConfigError(path + ": n_orient and n_draws must be >= 1");
  return c;
}

}  // namespace molsense
