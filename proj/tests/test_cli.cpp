#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "molsense/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MOLSENSE_CLI) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("molsense_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("exit codes", "[cli]") {
  const fs::path d = fresh_dir("codes");
  CHECK(run("") == 2);
  CHECK(run("nonsense") == 2);
  CHECK(run("--out " + d.string() + " calibrate --tau-d 800") == 2);
  CHECK(run("--out " + d.string() + " calibrate") == 2);
  CHECK(run("--out " + d.string() + " filter-report --T 1.78us --N 0") == 2);
  CHECK(run("--out " + d.string() + " sense-map --budget /nonexistent.json") == 2);
  CHECK(run("--out " + d.string() + " filter-report --T 1.780us --N 8") == 0);
}

TEST_CASE("calibrate runs and reports offset suppression", "[cli]") {
  const fs::path d = fresh_dir("calibrate");
  REQUIRE(run("--out " + d.string() + " calibrate --tau-d 800ns --u-points 5") == 0);
  const auto man = nlohmann::json::parse(slurp(d / "manifest_calibrate.json"));
  const double tf = man["results"]["tau_f"].get<double>();
  CHECK(tf > 330e-9);
  CHECK(tf < 420e-9);
}

TEST_CASE("filter report outputs and manifest", "[cli]") {
  const fs::path d = fresh_dir("filter");
  REQUIRE(run("--out " + d.string() + " filter-report --T 1.780us --N 8") == 0);
  for (const char* f : {"filter.csv", "modulation.csv", "filter_report.json", "manifest_filter-report.json"})
    CHECK(fs::exists(d / f));
  const auto man = nlohmann::json::parse(slurp(d / "manifest_filter-report.json"));
  CHECK(man.contains("input_hash"));
  CHECK(man.contains("seed"));
  for (const auto& o : man["outputs"]) CHECK(o["sha256"] == molsense::sha256_file((d / o["path"].get<std::string>()).string()));
  const std::string csv = slurp(d / "filter.csv");
  CHECK(csv.rfind("# molsense filter-report", 0) == 0);
}

TEST_CASE("runs are byte-for-byte reproducible", "[cli]") {
  const fs::path a = fresh_dir("repro_a"), b = fresh_dir("repro_b");
  const std::string args = " --seed 7 sense-map --budget " + testutil::data("budget.json") +
                           " --nsr-points 4 --tau-acq-points 3";
  REQUIRE(run("--out " + a.string() + args) == 0);
  REQUIRE(run("--out " + b.string() + args) == 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const fs::path other = b / e.path().filename();
    REQUIRE(fs::exists(other));
    std::string x = slurp(e.path()), y = slurp(other);
    if (e.path().filename().string().rfind("manifest_", 0) == 0) {
      // only the output directory differs
      auto strip = [](std::string s, const std::string& dir) {
        for (auto p = s.find(dir); p != std::string::npos; p = s.find(dir)) s.erase(p, dir.size());
        return s;
      };
      x = strip(x, a.string());
      y = strip(y, b.string());
    }
    CHECK(x == y);
    ++n;
  }
  CHECK(n >= 3);
  // the 25 Hz row is always present
  const std::string csv = slurp(a / "sense_map.csv");
  CHECK(csv.find("\n25,") != std::string::npos);
}
