#include <doctest.h>

#include <fstream>

#include "dissipeuler/report.hpp"
#include "dissipeuler/runner.hpp"
#include "helpers.hpp"

using namespace dissipeuler;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json simulate_config() {
  return json::parse(R"({
    "seed": 5,
    "grid": {"dim": 2, "n": 16},
    "time": {"dt": 0.02, "horizon": 0.2, "snapshot_every": 5},
    "viscosity": 0.05,
    "forcing": {"modes": [
      {"k": [1, 0], "direction": [0, 1], "sigma": 0.3},
      {"k": [0, 1], "direction": [1, 0], "sigma": 0.3, "phase": "sin"}
    ]},
    "initial": {"kind": "random_phase", "energy": 0.5, "k_peak": 1.5, "k_max": 3},
    "paths": 3
  })");
}

std::string error_path(const json& j, const std::string& experiment) {
  try {
    parse_config(j, experiment, std::nullopt);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config schema: unknown keys and bad values are reported with their path") {
  auto j = simulate_config();
  CHECK(error_path(j, "simulate").empty());
  j["forcing"]["modes"][1]["sigmaa"] = 1.0;
  CHECK(error_path(j, "simulate") == "forcing.modes[1].sigmaa");
  j = simulate_config();
  j["time"]["dtt"] = 0.1;
  CHECK(error_path(j, "simulate") == "time.dtt");
  j = simulate_config();
  j["grid"]["n"] = "sixteen";
  CHECK(error_path(j, "simulate") == "grid.n");
  j = simulate_config();
  j["forcing"]["modes"][0]["direction"] = {1, 0};
  CHECK(error_path(j, "simulate") == "forcing");
  j = simulate_config();
  j["initial"]["kind"] = "vortex";
  CHECK(error_path(j, "simulate") == "initial.kind");
  j = simulate_config();
  j["time"]["horizon"] = 0.21;
  CHECK(error_path(j, "simulate") == "time");
  j = simulate_config();
  j["viscosities"] = {0.1};
  CHECK(error_path(j, "simulate") == "viscosities");
  CHECK_THROWS_AS(parse_config(simulate_config(), "nosuch", std::nullopt), ConfigError);
}

TEST_CASE("config: seed is required, can be overridden, experiment must match") {
  auto j = simulate_config();
  j.erase("seed");
  CHECK(error_path(j, "simulate") == "seed");
  CHECK(parse_config(j, "simulate", 11).seed == 11);
  CHECK(parse_config(simulate_config(), "simulate", 11).seed == 11);
  CHECK(parse_config(simulate_config(), "simulate", 11).echo["seed"] == 11);
  j = simulate_config();
  j["experiment"] = "vanish";
  CHECK(error_path(j, "simulate") == "experiment");
}

TEST_CASE("config: tolerances may be zero but not negative; ladders must decrease") {
  auto j = simulate_config();
  j["tolerances"] = {{"energy_constant", 0.0}};
  CHECK(parse_config(j, "simulate", std::nullopt).tolerances.energy_constant == 0.0);
  j["tolerances"] = {{"barycenter", -1.0}};
  CHECK(error_path(j, "simulate") == "tolerances.barycenter");

  j = simulate_config();
  j.erase("viscosity");
  j["viscosities"] = {0.1, 0.1};
  CHECK(error_path(j, "vanish") == "viscosities[1]");
  j["viscosities"] = {0.1, 0.05};
  j["measure"] = {{"cells_per_axis", 8}, {"time_slabs", 2}};
  const auto c = parse_config(j, "vanish", std::nullopt);
  CHECK(c.viscosities.size() == 2);
  CHECK(c.partition.cells_per_axis == 8);
  j["measure"]["time_slabs"] = 3;  // 0.2 / 3 is not a whole number of snapshots
  CHECK(error_path(j, "vanish") == "measure.time_slabs");
  j["measure"] = {{"cells_per_axis", 5}};
  CHECK(error_path(j, "vanish") == "measure.cells_per_axis");
}

TEST_CASE("config: martingale design") {
  auto j = simulate_config();
  j["paths"] = 32;
  j["probes"] = json::array({{{"k", {1, 0}}, {"direction", {0, 1}}}});
  j["martingale"] = {{"windows", {{0.04, 0.1}, {0.1, 0.2}}},
                     {"histories", {{{"kind", "beta"}, {"mode", 2}, {"scale", 0.5}}}},
                     {"modes", {1}}};
  const auto c = parse_config(j, "martingale", std::nullopt);
  CHECK(c.martingale.windows[0] == std::pair<std::size_t, std::size_t>{2, 5});
  CHECK(c.martingale.histories[0].mode == 1);
  CHECK(c.martingale.modes == std::vector<std::size_t>{0});
  j["martingale"]["windows"][0] = {0.03, 0.1};
  CHECK(error_path(j, "martingale") == "martingale.windows[0]");
  j["martingale"]["windows"][0] = {0.04, 0.1};
  j["martingale"]["histories"][0]["mode"] = 3;
  CHECK(error_path(j, "martingale") == "martingale.histories[0].mode");
  j["martingale"]["histories"][0]["mode"] = 2;
  j["paths"] = 8;
  CHECK(error_path(j, "martingale") == "paths");
  CHECK(error_path(j, "simulate") == "martingale");
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("simulate run: artifacts, manifest, render, refusal to overwrite") {
  const auto dir = testing::scratch_dir("runner_sim");
  const auto cfg = parse_config(simulate_config(), "simulate", std::nullopt);
  const auto outcome = run_experiment(cfg, dir, 2);
  CHECK(outcome.pass);
  CHECK(outcome.exit_code == 0);
  for (const char* f : {"config.json", "report.json", "manifest.json", "trace_p0.csv", "noise_p2.csv",
                        "snapshots/p1_00002.bin"})
    CHECK(fs::exists(dir / f));
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["seed"] == 5);
  std::vector<std::string> listed;
  for (const auto& f : manifest["files"]) listed.push_back(f["path"]);
  CHECK(std::is_sorted(listed.begin(), listed.end()));
  CHECK(std::find(listed.begin(), listed.end(), "manifest.json") == listed.end());
  CHECK(manifest["files"][0]["sha256"] == sha256_file(dir / listed[0]));

  const auto r = report_render(dir);
  CHECK(r.ok);
  CHECK(r.text.find("FAIL") == std::string::npos);
  CHECK(r.text.find("ns_solver/energy_audit") != std::string::npos);

  CHECK_THROWS(run_experiment(cfg, dir, 1));

  // tampering is detected
  {
    std::ofstream out(dir / "trace_p0.csv", std::ios::app);
    out << "0,0,0,0,0,0\n";
  }
  const auto t = report_render(dir);
  CHECK_FALSE(t.ok);
  CHECK(t.corrupted == std::vector<std::string>{"trace_p0.csv"});
  fs::remove_all(dir);
}

TEST_CASE("fault injection: a zero energy tolerance fails its row") {
  auto j = simulate_config();
  j["tolerances"] = {{"energy_constant", 0.0}};
  const auto dir = testing::scratch_dir("runner_fault");
  const auto outcome = run_experiment(parse_config(j, "simulate", std::nullopt), dir, 1);
  CHECK_FALSE(outcome.pass);
  CHECK(outcome.exit_code == 1);
  const auto r = report_render(dir);
  CHECK_FALSE(r.ok);
  CHECK(r.complete);
  CHECK(r.text.find("FAIL  energy inequality") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("report on an empty directory lists the missing manifest") {
  const auto dir = testing::scratch_dir("runner_empty");
  fs::create_directories(dir);
  const auto r = report_render(dir);
  CHECK_FALSE(r.ok);
  CHECK(r.missing == std::vector<std::string>{"manifest.json"});
  CHECK(r.text.find("manifest.json") != std::string::npos);
  fs::remove_all(dir);
}
