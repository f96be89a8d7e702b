// dissipeuler <subcommand> --config <file> [--seed N] [--out DIR] [--threads N]
//
// Exit codes: 0 all audits pass, 1 an audit failed (or report found problems),
// 2 usage or config error, 3 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "dissipeuler/report.hpp"
#include "dissipeuler/runner.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

int run(const std::string& experiment, const Options& o) {
  try {
    const auto cfg = dissipeuler::load_config(o.config, experiment, o.seed);
    const std::string out = o.out.empty() ? "runs/" + experiment + "_seed" + std::to_string(cfg.seed) : o.out;
    const auto outcome = dissipeuler::run_experiment(cfg, out, o.threads);
    const auto rendered = dissipeuler::report_render(out);
    std::cout << rendered.text;
    return outcome.exit_code;
  } catch (const dissipeuler::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Navier-Stokes / Euler experiment harness"};
  app.require_subcommand(1);

  Options opts;
  std::string report_dir;
  for (const auto& name : dissipeuler::kExperiments) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", opts.config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "master seed (overrides the config)");
    sub->add_option("--out", opts.out, "run directory (must be empty or absent)");
    sub->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
  }
  auto* rep = app.add_subcommand("report", "render the audit table of a run directory");
  rep->add_option("dir", report_dir, "run directory");
  rep->add_option("--out", opts.out, "run directory (alternative to the positional form)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (rep->parsed()) {
    const std::string dir = !report_dir.empty() ? report_dir : opts.out;
    if (dir.empty()) {
      std::cerr << "report: give a run directory\n";
      return 2;
    }
    try {
      const auto r = dissipeuler::report_render(dir);
      std::cout << r.text;
      return r.ok ? 0 : 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  for (const auto* sub : app.get_subcommands()) return run(sub->get_name(), opts);
  return 2;
}
