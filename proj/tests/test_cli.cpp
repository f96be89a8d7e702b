// Drives the dissipeuler executable as a subprocess.

#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(DISSIPEULER_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path config(const std::string& name) { return fs::path(DISSIPEULER_SOURCE_DIR) / "configs" / name; }

fs::path write_config(const std::string& name, const std::string& body) {
  const auto p = fs::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("simulate with zero forcing and zero data: zero energy trace, exit 0") {
  const auto out = testing::scratch_dir("cli_zero");
  const auto r = run("simulate --config " + config("simulate_zero.json").string() + " --out " + out.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("all audits passed") != std::string::npos);
  const auto trace = slurp(out / "trace_p0.csv");
  std::istringstream lines(trace);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "t,E,D,I,M,defect");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.substr(line.find(',')) == ",0,0,0,0,0");
  }
  CHECK(rows == 51);
  fs::remove_all(out);
}

TEST_CASE("rerun with the same seed gives identical manifests at 1 and 8 threads") {
  const auto a = testing::scratch_dir("cli_det_a");
  const auto b = testing::scratch_dir("cli_det_b");
  const auto c = testing::scratch_dir("cli_det_c");
  CHECK(run("simulate --config " + config("simulate.json").string() + " --threads 1 --out " + a.string()).code == 0);
  CHECK(run("simulate --config " + config("simulate.json").string() + " --threads 8 --out " + b.string()).code == 0);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  CHECK(run("simulate --config " + config("simulate.json").string() + " --seed 8 --out " + c.string()).code == 0);
  CHECK(slurp(a / "manifest.json") != slurp(c / "manifest.json"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("fault injection through the CLI exits nonzero and the report shows the failing row") {
  const auto cfg = write_config("dissipeuler_fault.json", R"({
    "seed": 3, "grid": {"dim": 2, "n": 16}, "time": {"dt": 0.02, "horizon": 0.2},
    "viscosity": 0.05,
    "forcing": {"modes": [{"k": [1, 0], "direction": [0, 1], "sigma": 0.5}]},
    "initial": {"kind": "shear", "amplitude": 0.5},
    "tolerances": {"energy_constant": 0}
  })");
  const auto out = testing::scratch_dir("cli_fault");
  const auto r = run("simulate --config " + cfg.string() + " --out " + out.string());
  CHECK(r.code == 1);
  CHECK(r.out.find("FAIL  energy inequality") != std::string::npos);
  const auto rep = run("report " + out.string());
  CHECK(rep.code == 1);
  CHECK(rep.out.find("FAIL") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("report: empty directory, passing run") {
  const auto empty = testing::scratch_dir("cli_empty");
  fs::create_directories(empty);
  const auto r = run("report --out " + empty.string());
  CHECK(r.code == 1);
  CHECK(r.out.find("missing artifacts") != std::string::npos);
  CHECK(r.out.find("manifest.json") != std::string::npos);

  const auto out = testing::scratch_dir("cli_pass");
  CHECK(run("simulate --config " + config("simulate_zero.json").string() + " --out " + out.string()).code == 0);
  const auto ok = run("report " + out.string());
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  for (const auto& d : {empty, out}) fs::remove_all(d);
}

TEST_CASE("usage and config errors exit 2 with the offending field") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate --config x").code == 2);
  const auto cfg = write_config("dissipeuler_typo.json", R"({
    "seed": 3, "grid": {"dim": 2, "n": 16}, "time": {"dt": 0.02, "horizon": 0.2},
    "viscosity": 0.05,
    "forcing": {"modes": [{"k": [1, 0], "direction": [0, 1], "sigma": 0.5},
                          {"k": [0, 1], "direction": [1, 0], "sigmaa": 0.5}]}
  })");
  const auto r = run("simulate --config " + cfg.string() + " --out " + testing::scratch_dir("cli_typo").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("forcing.modes[1].sigmaa") != std::string::npos);
  const auto bad = write_config("dissipeuler_bad.json", "{ not json");
  CHECK(run("simulate --config " + bad.string()).code == 2);
}

TEST_CASE("a non-empty output directory is refused") {
  const auto out = testing::scratch_dir("cli_nonempty");
  fs::create_directories(out);
  std::ofstream(out / "keep.txt") << "x";
  const auto r = run("simulate --config " + config("simulate_zero.json").string() + " --out " + out.string());
  CHECK(r.code == 3);
  CHECK(slurp(out / "keep.txt") == "x");
  fs::remove_all(out);
}
