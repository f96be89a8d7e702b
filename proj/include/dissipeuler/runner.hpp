#pragma once

// Experiment configuration and orchestration behind the command-line front end.
//
// Configs are JSON objects; unknown keys are rejected with their path (for
// example `forcing.modes[1].sigmaa`). The seed must come from the config or
// the command line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dissipeuler/limit.hpp"
#include "dissipeuler/solver.hpp"
#include "dissipeuler/weak_strong.hpp"
#include "dissipeuler/young_measure.hpp"

namespace dissipeuler {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline const std::vector<std::string> kExperiments{"simulate", "vanish", "ym", "martingale", "weakstrong"};

struct Tolerances {
  double energy_constant = 2.0;       // tol(dt) = C sqrt(dt) (1 + E_0)
  double barycenter = 1e-10;          // |barycenter - cell average|
  double relative_energy_forms = 0.02;
  double divergence = 1e-12;
};

struct WeakStrongSettings {
  StrongReferenceOptions reference;
  std::vector<double> L{5.0, 10.0, 20.0};
};

struct RunConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::vector<double> viscosities;
  std::size_t paths = 1;
  Partition partition;
  BinSpec bins;
  Tolerances tolerances;
  std::vector<double> radius_sweep{0.5, 1.0, 2.0};  // multiples of bins.radius
  MartingaleDesign martingale;
  WeakStrongSettings weakstrong;
  double apriori_p = 3.0;
  nlohmann::json echo;  // normalised config as written to the run directory
};

// `seed_override` replaces the config's seed; throws ConfigError.
RunConfig parse_config(const nlohmann::json& config, const std::string& experiment,
                       std::optional<std::uint64_t> seed_override);
RunConfig load_config(const std::filesystem::path& path, const std::string& experiment,
                      std::optional<std::uint64_t> seed_override);

struct RunOutcome {
  bool pass = false;
  int exit_code = 0;  // 0 pass, 1 audit failure
};

// Runs the experiment into `out_dir` (created if needed; must be empty or absent).
RunOutcome run_experiment(const RunConfig& config, const std::filesystem::path& out_dir, int threads);

}  // namespace dissipeuler
