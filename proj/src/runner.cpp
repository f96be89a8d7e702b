#include "dissipeuler/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dissipeuler/parallel.hpp"
#include "dissipeuler/report.hpp"

namespace dissipeuler {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config reading

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void check_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(join(path, key), "unknown key");
}

double number(const json& j, const std::string& path, const char* key, std::optional<double> fallback) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "required number missing");
  }
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& j, const std::string& path, const char* key, std::optional<std::int64_t> fallback) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "required integer missing");
  }
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<std::int64_t>();
}

bool boolean(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return j.at(key).get<bool>();
}

std::string text(const json& j, const std::string& path, const char* key, std::optional<std::string> fallback) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "required string missing");
  }
  if (!j.at(key).is_string()) throw ConfigError(join(path, key), "expected a string");
  return j.at(key).get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(index_path(path, i), "expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

Wavevector wavevector(const json& j, const std::string& path, int dim) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(dim))
    throw ConfigError(path, "expected " + std::to_string(dim) + " integers");
  Wavevector k{0, 0, 0};
  for (int d = 0; d < dim; ++d) {
    if (!j[d].is_number_integer()) throw ConfigError(index_path(path, d), "expected an integer");
    k[d] = j[d].get<int>();
  }
  return k;
}

Vec3 vector3(const json& j, const std::string& path, int dim) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(dim))
    throw ConfigError(path, "expected " + std::to_string(dim) + " numbers");
  Vec3 v{0.0, 0.0, 0.0};
  for (int d = 0; d < dim; ++d) {
    if (!j[d].is_number()) throw ConfigError(index_path(path, d), "expected a number");
    v[d] = j[d].get<double>();
  }
  return v;
}

ModePhase phase(const json& j, const std::string& path) {
  const std::string p = text(j, path, "phase", std::string("cos"));
  if (p == "cos") return ModePhase::Cos;
  if (p == "sin") return ModePhase::Sin;
  throw ConfigError(join(path, "phase"), "expected \"cos\" or \"sin\"");
}

template <typename Fn>
auto wrap(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

ForcingOperator parse_forcing(const json& root, int dim) {
  if (!root.contains("forcing")) return ForcingOperator::none(dim);
  const auto& f = root.at("forcing");
  check_object(f, "forcing", {"modes"});
  if (!f.contains("modes")) throw ConfigError("forcing.modes", "required array missing");
  const auto& modes = f.at("modes");
  if (!modes.is_array()) throw ConfigError("forcing.modes", "expected an array");
  if (modes.empty()) return ForcingOperator::none(dim);
  std::vector<ForcingMode> out;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string p = index_path("forcing.modes", i);
    check_object(modes[i], p, {"k", "direction", "sigma", "phase"});
    ForcingMode m;
    if (!modes[i].contains("k")) throw ConfigError(join(p, "k"), "required");
    if (!modes[i].contains("direction")) throw ConfigError(join(p, "direction"), "required");
    m.k = wavevector(modes[i].at("k"), join(p, "k"), dim);
    m.direction = vector3(modes[i].at("direction"), join(p, "direction"), dim);
    m.sigma = number(modes[i], p, "sigma", std::nullopt);
    m.phase = phase(modes[i], p);
    out.push_back(m);
  }
  return wrap("forcing", [&] { return ForcingOperator(dim, out); });
}

InitialLaw parse_initial(const json& root, int dim) {
  InitialLaw law;
  if (!root.contains("initial")) return law;
  const auto& j = root.at("initial");
  const std::string kind = j.is_object() ? text(j, "initial", "kind", std::nullopt) : "";
  if (kind == "zero") {
    check_object(j, "initial", {"kind"});
    law.kind = InitialLaw::Kind::Zero;
  } else if (kind == "shear" || kind == "taylor_green") {
    check_object(j, "initial", {"kind", "amplitude"});
    law.kind = kind == "shear" ? InitialLaw::Kind::Shear : InitialLaw::Kind::TaylorGreen;
    law.amplitude = number(j, "initial", "amplitude", 1.0);
  } else if (kind == "random_phase") {
    check_object(j, "initial", {"kind", "energy", "k_peak", "k_max"});
    law.kind = InitialLaw::Kind::RandomPhase;
    law.energy = number(j, "initial", "energy", 0.5);
    law.k_peak = number(j, "initial", "k_peak", 2.0);
    law.k_max = static_cast<int>(integer(j, "initial", "k_max", 4));
    if (!(law.energy >= 0.0)) throw ConfigError("initial.energy", "must be >= 0");
    if (!(law.k_peak > 0.0)) throw ConfigError("initial.k_peak", "must be > 0");
  } else if (kind == "modes") {
    check_object(j, "initial", {"kind", "modes"});
    law.kind = InitialLaw::Kind::Modes;
    if (!j.contains("modes") || !j.at("modes").is_array()) throw ConfigError("initial.modes", "expected an array");
    const auto& modes = j.at("modes");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::string p = index_path("initial.modes", i);
      check_object(modes[i], p, {"k", "direction", "amplitude", "phase"});
      TrigMode m;
      if (!modes[i].contains("k")) throw ConfigError(join(p, "k"), "required");
      if (!modes[i].contains("direction")) throw ConfigError(join(p, "direction"), "required");
      m.k = wavevector(modes[i].at("k"), join(p, "k"), dim);
      m.direction = vector3(modes[i].at("direction"), join(p, "direction"), dim);
      m.amplitude = number(modes[i], p, "amplitude", std::nullopt);
      m.phase = phase(modes[i], p);
      law.modes.push_back(m);
    }
  } else {
    throw ConfigError("initial.kind", "expected zero, shear, taylor_green, random_phase or modes");
  }
  return law;
}

std::vector<SpectralField> parse_probes(const json& root, const TorusGrid& grid) {
  std::vector<SpectralField> out;
  if (!root.contains("probes")) return out;
  const auto& probes = root.at("probes");
  if (!probes.is_array()) throw ConfigError("probes", "expected an array");
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const std::string p = index_path("probes", i);
    check_object(probes[i], p, {"k", "direction", "phase"});
    ForcingMode m;
    if (!probes[i].contains("k")) throw ConfigError(join(p, "k"), "required");
    if (!probes[i].contains("direction")) throw ConfigError(join(p, "direction"), "required");
    m.k = wavevector(probes[i].at("k"), join(p, "k"), grid.dim());
    m.direction = vector3(probes[i].at("direction"), join(p, "direction"), grid.dim());
    m.sigma = 1.0;
    m.phase = phase(probes[i], p);
    out.push_back(wrap(p, [&] {
      const ForcingOperator single(grid.dim(), {m});
      return mode_field(single.modes().front(), grid);
    }));
  }
  return out;
}

std::size_t step_index(double t, double dt, const std::string& path) {
  const double x = t / dt;
  const auto n = static_cast<std::size_t>(std::llround(x));
  if (t < 0.0 || std::abs(x - static_cast<double>(n)) > 1e-9) throw ConfigError(path, "time must be a multiple of dt");
  return n;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string trace_csv(const EnergyTrace& trace) {
  std::ostringstream s;
  s << "t,E,D,I,M,defect\n";
  for (std::size_t n = 0; n < trace.size(); ++n)
    s << fmt(trace.time[n]) << ',' << fmt(trace.energy[n]) << ',' << fmt(trace.dissipation[n]) << ','
      << fmt(trace.ito_correction[n]) << ',' << fmt(trace.martingale[n]) << ','
      << fmt(n == 0 ? 0.0 : energy_audit(trace, 0, n)) << '\n';
  return s.str();
}

json estimate_json(const Estimate& e) {
  return {{"mean", e.mean}, {"std_error", e.std_error}, {"half_width", e.half_width}, {"samples", e.samples}};
}

struct PathRun {
  PathResult result;
  std::string error;
};

PathRun run_guarded(const SolverConfig& cfg, std::uint64_t seed, std::uint64_t path_id) {
  PathRun out;
  try {
    out.result = run_path(cfg, seed, path_id);
  } catch (const BlowUpError& e) {
    out.error = e.what();
    if (e.partial()) out.result = *e.partial();
  }
  return out;
}

std::vector<PathRun> run_ensemble(const SolverConfig& cfg, std::uint64_t seed, std::size_t paths, int threads) {
  std::vector<PathRun> runs(paths);
  parallel_for(paths, threads, [&](std::size_t i) { runs[i] = run_guarded(cfg, seed, i); });
  return runs;
}

double energy_tol(const RunConfig& c, const EnergyTrace& trace) {
  return energy_tolerance(c.tolerances.energy_constant, trace.dt, trace.size() ? trace.energy[0] : 0.0);
}

struct Audits {
  std::vector<AuditRow> rows;
  void add(std::string name, std::string source, double value, double tolerance, std::string note = "") {
    rows.push_back({std::move(name), std::move(source), value, tolerance, value <= tolerance, std::move(note)});
  }
  bool pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const AuditRow& r) { return r.pass; });
  }
  json to_json() const {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(dissipeuler::to_json(r));
    return arr;
  }
};

json defect_json(const EnergyTrace& trace, double tol) {
  const auto m = max_defect(trace);
  return {{"max_defect", m.defect}, {"s", trace.size() ? trace.time[m.s] : 0.0},
          {"t", trace.size() ? trace.time[m.t] : 0.0}, {"tolerance", tol}};
}

// Largest max_defect - tol(dt) over the traces; a ratio would be infinite for a zero tolerance.
double worst_defect_excess(const std::vector<const EnergyTrace*>& traces, const RunConfig& c) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto* t : traces) worst = std::max(worst, max_defect(*t).defect - energy_tol(c, *t));
  return traces.empty() ? 0.0 : worst;
}

// ---------------------------------------------------------------------------
// Experiments

json run_simulate(const RunConfig& c, const fs::path& out, int threads, Audits& audits) {
  const auto runs = run_ensemble(c.solver, c.seed, c.paths, threads);
  json report;
  json per_path = json::array();
  std::vector<const EnergyTrace*> traces;
  std::size_t failures = 0;
  double divergence = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i].result;
    const std::string tag = "p" + std::to_string(i);
    write_text(out / ("trace_" + tag + ".csv"), trace_csv(r.trace));
    for (std::size_t j = 0; j < r.snapshots.size(); ++j) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshots/%s_%05zu.bin", tag.c_str(), j);
      fs::create_directories(out / "snapshots");
      write_snapshot((out / name).string(), r.snapshots[j].field, r.snapshots[j].time);
      divergence = std::max(divergence, divergence_residual(r.snapshots[j].field));
    }
    {
      const std::size_t steps = r.trace.size() > 0 ? r.trace.size() - 1 : 0;
      std::vector<double> incr;
      for (std::size_t n = 1; n < r.beta.size(); ++n)
        for (std::size_t k = 0; k < r.beta[n].size(); ++k) incr.push_back(r.beta[n][k] - r.beta[n - 1][k]);
      const WienerPath path({c.seed, i}, c.solver.forcing.rank(), c.solver.dt_base(), c.solver.refinement, 0,
                            std::move(incr));
      std::ostringstream csv;
      write_path_csv(csv, path);
      write_text(out / ("noise_" + tag + ".csv"), csv.str());
      (void)steps;
    }
    traces.push_back(&r.trace);
    json p = {{"path_id", i}, {"initial_energy", r.trace.energy.front()}, {"final_energy", r.trace.energy.back()},
              {"energy_audit", defect_json(r.trace, energy_tol(c, r.trace))},
              {"substepped_steps", r.substepped_steps}};
    if (!runs[i].error.empty()) {
      p["error"] = runs[i].error;
      ++failures;
    }
    per_path.push_back(std::move(p));
  }
  report["paths"] = per_path;
  audits.add("paths completed without blow-up", "ns_solver/run_path", static_cast<double>(failures), 0.0,
             "value = blown-up paths; partial traces kept");
  audits.add("energy inequality, max defect - tol(dt)", "ns_solver/energy_audit", worst_defect_excess(traces, c), 0.0);
  audits.add("divergence residual of snapshots", "spectral_core/leray_project", divergence, c.tolerances.divergence);
  if (c.paths >= 1) {
    std::vector<std::vector<EnergyTrace>> level(1);
    for (const auto* t : traces) level[0].push_back(*t);
    const std::vector<double> eps{c.solver.viscosity};
    const auto apriori = apriori_monitor(level, eps, c.apriori_p);
    report["apriori"] = {{"p", apriori.p}, {"moment", estimate_json(apriori.levels[0].moment)}};
  }
  if (!c.solver.probes.empty()) {
    json holder = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i)
      holder.push_back(holder_seminorm(runs[i].result.snapshots, c.solver.probes.front(), 0.25));
    report["holder_quarter"] = holder;
  }
  return report;
}

json run_vanish(const RunConfig& c, const fs::path& out, int threads, Audits& audits) {
  ViscosityLadder ladder;
  ladder.viscosities = c.viscosities;
  ladder.base = c.solver;
  ladder.seed = c.seed;
  ladder.path_ids.clear();
  for (std::size_t i = 0; i < c.paths; ++i) ladder.path_ids.push_back(i);
  ladder.partition = c.partition;
  ladder.bins = c.bins;
  const auto result = run_ladder(ladder, threads, true);
  const std::size_t levels = c.viscosities.size();

  json report;
  std::size_t failures = 0;
  std::size_t noise_mismatch = 0;
  double bary = 0.0;
  for (const auto& p : result.paths) {
    for (std::size_t l = 0; l < levels; ++l) {
      write_text(out / ("trace_eps" + std::to_string(l) + "_p" + std::to_string(p.path_id) + ".csv"),
                 trace_csv(p.levels[l].trace));
      if (!p.errors[l].empty()) ++failures;
      if (l > 0 && p.errors[l].empty() && p.errors[0].empty() && p.levels[l].beta != p.levels[0].beta) ++noise_mismatch;
    }
    bary = std::max(bary, p.barycenter_error);
  }
  if (!result.paths.empty() && result.paths.front().family)
    write_json(out / "measure_family_p0.json", to_json(*result.paths.front().family));

  // Cauchy diagnostic
  std::size_t violations = 0;
  for (std::size_t l = 1; l < result.mean_distance.size(); ++l)
    if (!(result.mean_distance[l] < result.mean_distance[l - 1])) ++violations;
  report["viscosities"] = c.viscosities;
  report["mean_successive_distance"] = result.mean_distance;
  json per_path = json::array();
  for (const auto& p : result.paths) {
    json jp = {{"path_id", p.path_id}, {"successive_distance", p.successive_distance},
               {"barycenter_error", p.barycenter_error}};
    json errs = json::array();
    for (const auto& e : p.errors) errs.push_back(e);
    jp["errors"] = errs;
    per_path.push_back(std::move(jp));
  }
  report["paths"] = per_path;

  // Limit energy inequality on each path's family measure.
  double worst = -std::numeric_limits<double>::infinity();
  double tol = 0.0;
  json limit = json::array();
  const double hs = hs_norm_sq(c.solver.forcing);
  for (const auto& p : result.paths) {
    std::vector<const EnergyTrace*> tail;
    double e0 = 0.0;
    for (std::size_t l = ladder.tail_begin(); l < levels; ++l) {
      tail.push_back(&p.levels[l].trace);
      e0 = std::max(e0, p.levels[l].trace.energy.front());
    }
    const double t = energy_tolerance(c.tolerances.energy_constant, c.solver.dt, e0);
    const auto rep = energy_inequality_limit(*p.family, tail, hs, t);
    worst = std::max(worst, std::max(rep.max_defect, rep.max_jump) - t);
    tol = t;
    limit.push_back({{"path_id", p.path_id}, {"slab_energy", rep.slab_energy}, {"compensated", rep.compensated},
                     {"max_defect", rep.max_defect}, {"max_jump", rep.max_jump}, {"tolerance", t}, {"pass", rep.pass}});
  }
  report["energy_inequality_limit"] = limit;

  // A priori moments along the ladder.
  std::vector<std::vector<EnergyTrace>> per_level(levels);
  for (const auto& p : result.paths)
    for (std::size_t l = 0; l < levels; ++l) per_level[l].push_back(p.levels[l].trace);
  const auto apriori = apriori_monitor(per_level, c.viscosities, c.apriori_p);
  json ap = json::array();
  std::size_t apriori_violations = 0;
  for (std::size_t l = 0; l < apriori.levels.size(); ++l) {
    ap.push_back({{"viscosity", apriori.levels[l].viscosity}, {"moment", estimate_json(apriori.levels[l].moment)}});
    if (l > 0) {
      const auto& a = apriori.levels[l - 1].moment;
      const auto& b = apriori.levels[l].moment;
      if (apriori_exceeds(a, b)) ++apriori_violations;
    }
  }
  report["apriori"] = {{"p", apriori.p}, {"levels", ap}};

  // Momentum residual and time regularity of path 0 (diagnostics).
  if (!result.paths.empty()) {
    const auto& p0 = result.paths.front();
    SpectralField phi = c.solver.probes.empty()
                            ? mode_field(ForcingOperator(c.solver.grid.dim(), {ForcingMode{{1, 0, 0}, {0.0, 1.0, 0.0}, 1.0, ModePhase::Cos}})
                                             .modes()
                                             .front(),
                                         c.solver.grid)
                            : c.solver.probes.front();
    json mom = json::array();
    json holder = json::array();
    for (std::size_t l = 0; l < levels; ++l) {
      const auto& run = p0.levels[l];
      holder.push_back(holder_seminorm(run.snapshots, phi, 0.25));
      // Largest slab boundary carrying a snapshot.
      for (std::size_t s = c.partition.time_slabs; s > 0; --s) {
        const double t = c.partition.slab_start(0) + static_cast<double>(s) * c.partition.slab_duration();
        const std::size_t n = static_cast<std::size_t>(std::llround(t / c.solver.dt));
        const bool have = std::any_of(run.snapshots.begin(), run.snapshots.end(),
                                      [&](const Snapshot& sn) { return std::abs(sn.time - t) < 1e-9; });
        if (!have || n >= run.beta.size()) continue;
        const auto r = momentum_residual(p0.measures[l], run.snapshots, c.solver.forcing, run.beta[n], phi, t,
                                         c.viscosities[l]);
        mom.push_back({{"viscosity", c.viscosities[l]}, {"t", t}, {"residual", r.residual}, {"lhs", r.lhs},
                       {"convective", r.convective}, {"viscous", r.viscous}, {"noise", r.noise}});
        break;
      }
    }
    report["momentum_residual_p0"] = mom;
    report["holder_quarter_p0"] = holder;
  }

  audits.add("ladder completed without blow-up", "limit_verifier/run_ladder", static_cast<double>(failures), 0.0);
  audits.add("shared noise across viscosities", "limit_verifier/run_ladder", static_cast<double>(noise_mismatch), 0.0,
             "value = levels whose Brownian path differs");
  audits.add("Cauchy diagnostic strictly decreasing", "young_measure/weakstar_distance", static_cast<double>(violations),
             0.0, "value = non-decreasing successive pairs");
  audits.add("barycenter matches cell averages", "limit_verifier/run_ladder", bary, c.tolerances.barycenter);
  audits.add("limit energy inequality, defect - tol", "limit_verifier/energy_inequality_limit", worst, 0.0,
             "tol(dt) = " + fmt(tol));
  // A single path has no confidence interval; the comparison is then not assessed.
  if (c.paths >= 2)
    audits.add("a priori moments uniform in viscosity", "ns_solver/apriori_monitor",
               static_cast<double>(apriori_violations), 0.0, "value = levels exceeding predecessor beyond CIs");
  else
    report["apriori"]["assessed"] = false;
  return report;
}

json run_ym(const RunConfig& c, const fs::path& out, int threads, Audits& audits) {
  const std::size_t levels = c.viscosities.size();
  std::vector<std::vector<PathRun>> runs(c.paths, std::vector<PathRun>(levels));
  parallel_for(c.paths * levels, threads, [&](std::size_t job) {
    const std::size_t p = job / levels;
    const std::size_t l = job % levels;
    SolverConfig cfg = c.solver;
    cfg.viscosity = c.viscosities[l];
    runs[p][l] = run_guarded(cfg, c.seed, p);
  });
  json report;
  std::size_t failures = 0;
  double second_moment_ratio = 0.0;
  double normalisation = 0.0;
  json sweep = json::array();
  json per_path = json::array();
  for (std::size_t p = 0; p < c.paths; ++p) {
    std::vector<PhysicalTrajectory> phys;
    double max_energy = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
      if (!runs[p][l].error.empty()) ++failures;
      phys.push_back(to_physical(runs[p][l].result.snapshots));
      for (double e : runs[p][l].result.trace.energy) max_energy = std::max(max_energy, e);
    }
    std::vector<const PhysicalTrajectory*> family;
    for (const auto& t : phys) family.push_back(&t);
    const auto measure = estimate_from_family(family, c.partition, c.bins);
    write_json(out / ("measure_p" + std::to_string(p) + ".json"), to_json(measure));
    json slabs = json::array();
    for (std::size_t s = 0; s < c.partition.time_slabs; ++s) {
      const double e = energy_of(measure, s);
      slabs.push_back({{"energy", e}, {"lambda_t", measure.lambda_t(s)}});
      if (max_energy > 0.0) second_moment_ratio = std::max(second_moment_ratio, e / max_energy);
      for (std::size_t cell = 0; cell < c.partition.cells_per_slab(); ++cell) {
        const auto& yc = measure.cell(s, cell);
        double w = 0.0;
        for (const auto& a : yc.nu) w += a.weight;
        normalisation = std::max(normalisation, std::abs(w - 1.0));
        if (yc.lambda > 0.0) {
          double wi = 0.0;
          for (const auto& a : yc.nu_inf) wi += a.weight;
          normalisation = std::max(normalisation, std::abs(wi - 1.0));
        }
      }
    }
    const auto& d = measure.diagnostics();
    per_path.push_back({{"path_id", p},
                        {"slabs", slabs},
                        {"max_pathwise_energy", max_energy},
                        {"samples", d.samples},
                        {"concentrated", d.concentrated},
                        {"empty_cells", d.empty_cells}});
    if (p == 0) {
      for (double factor : c.radius_sweep) {
        BinSpec b = c.bins;
        b.radius = c.bins.radius * factor;
        const auto m = estimate_from_family(family, c.partition, b);
        sweep.push_back({{"radius", b.radius},
                         {"lambda_total", m.lambda_total()},
                         {"concentrated", m.diagnostics().concentrated},
                         {"empty_cells", m.diagnostics().empty_cells}});
      }
    }
  }
  report["viscosities"] = c.viscosities;
  report["paths"] = per_path;
  report["radius_sweep_p0"] = sweep;
  audits.add("runs completed without blow-up", "ns_solver/run_path", static_cast<double>(failures), 0.0);
  audits.add("histograms normalised", "young_measure/estimate_from_family", normalisation, 1e-12);
  audits.add("slab energy / max pathwise energy", "young_measure/energy_of", second_moment_ratio, 1.0 + 1e-12);
  return report;
}

json run_martingale(const RunConfig& c, const fs::path& out, int threads, Audits& audits) {
  const auto runs = run_ensemble(c.solver, c.seed, c.paths, threads);
  std::vector<PathResult> ensemble;
  std::size_t failures = 0;
  std::ostringstream csv;
  csv << "path_id,probe,n,t,pairing,M\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].error.empty()) {
      ++failures;
      continue;
    }
    const auto& r = runs[i].result;
    for (std::size_t p = 0; p < r.probes.size(); ++p)
      for (std::size_t n = 0; n < r.trace.size(); ++n)
        csv << i << ',' << p << ',' << n << ',' << fmt(r.trace.time[n]) << ',' << fmt(r.probes[p].pairing[n]) << ','
            << fmt(r.probes[p].martingale(n)) << '\n';
    ensemble.push_back(r);
  }
  write_text(out / "martingale_samples.csv", csv.str());
  audits.add("paths completed without blow-up", "ns_solver/run_path", static_cast<double>(failures), 0.0);
  json report;
  if (ensemble.size() < kMinMartingaleEnsemble) {
    audits.add("ensemble size", "limit_verifier/martingale_test", static_cast<double>(kMinMartingaleEnsemble),
               static_cast<double>(ensemble.size()), "fewer completed paths than the minimum");
    return report;
  }
  const auto mt = martingale_test(ensemble, c.solver, c.martingale);
  json stats = json::array();
  for (const auto& s : mt.statistics) {
    stats.push_back({{"name", s.name}, {"estimate", estimate_json(s.estimate)}, {"lower", s.lower},
                     {"upper", s.upper}, {"pass", s.pass}});
    const double scaled = s.estimate.std_error > 0.0 ? std::abs(s.estimate.mean) / (mt.z * s.estimate.std_error)
                                                     : (s.estimate.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    audits.add(s.name, "limit_verifier/martingale_test", scaled, 1.0, "|mean| / (z SE)");
  }
  report["paths"] = mt.paths;
  report["tests"] = mt.tests;
  report["z"] = mt.z;
  report["statistics"] = stats;
  return report;
}

json run_weakstrong(const RunConfig& c, const fs::path& out, int threads, Audits& audits) {
  const std::size_t levels = c.viscosities.size();
  const std::size_t slabs = c.solver.steps() / c.solver.snapshot_every;
  Partition part{c.solver.grid.dim(), c.solver.grid.n(), slabs, c.solver.horizon};
  struct Slot {
    StrongReference ref;
    std::vector<WeakStrongPath> compare;
    std::vector<std::string> errors;
  };
  std::vector<Slot> slots(c.paths);
  parallel_for(c.paths, threads, [&](std::size_t i) {
    Slot s;
    s.ref = strong_reference(c.solver, c.seed, i, c.weakstrong.reference);
    for (std::size_t l = 0; l < levels; ++l) {
      SolverConfig cfg = c.solver;
      cfg.viscosity = c.viscosities[l];
      const auto run = run_guarded(cfg, c.seed, i);
      s.errors.push_back(run.error);
      const auto measure = dirac_embed(run.result.snapshots, part, c.bins);
      s.compare.push_back(compare_paths(measure, s.ref, run.result.trace, cfg.grid, cfg.viscosity, i));
    }
    slots[i] = std::move(s);
  });

  std::size_t failures = 0;
  double f0 = 0.0;
  double negativity = 0.0;
  double forms = 0.0;
  std::ostringstream csv;
  csv << "viscosity,path_id,t,F_measure,F_expanded,slack,grad_sup\n";
  json refs = json::array();
  for (std::size_t i = 0; i < c.paths; ++i) {
    const auto& s = slots[i];
    if (!s.ref.error.empty()) ++failures;
    refs.push_back({{"path_id", i}, {"horizon", s.ref.horizon}, {"energy_equality_residual", s.ref.energy_equality_residual},
                    {"error", s.ref.error}});
    for (std::size_t l = 0; l < levels; ++l) {
      if (!s.errors[l].empty()) ++failures;
      const auto& w = s.compare[l];
      for (std::size_t j = 0; j < w.times.size(); ++j) {
        csv << fmt(c.viscosities[l]) << ',' << i << ',' << fmt(w.times[j]) << ',' << fmt(w.f_measure[j]) << ','
            << fmt(w.f_expanded[j]) << ',' << fmt(w.slack[j]) << ',' << fmt(w.gradient_sup[j]) << '\n';
        negativity = std::max(negativity, -w.f_measure[j]);
        const double scale = std::max(std::abs(w.f_measure[j]), std::abs(w.f_expanded[j]));
        if (scale > 1e-12) forms = std::max(forms, std::abs(w.f_measure[j] - w.f_expanded[j]) / scale);
      }
      if (!w.f_measure.empty()) f0 = std::max(f0, std::abs(w.f_measure.front()));
    }
  }
  write_text(out / "relative_energy.csv", csv.str());

  json report;
  report["references"] = refs;
  json gron = json::array();
  std::vector<std::size_t> envelope_fail(c.weakstrong.L.size(), 0);
  std::vector<double> envelope_worst(c.weakstrong.L.size(), -std::numeric_limits<double>::infinity());
  std::size_t tsch_fail = 0;
  std::vector<Estimate> sup_at_max_l;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<WeakStrongPath> ens;
    for (const auto& s : slots) ens.push_back(s.compare[l]);
    json per_l = json::array();
    for (std::size_t q = 0; q < c.weakstrong.L.size(); ++q) {
      const double L = c.weakstrong.L[q];
      const auto g = gronwall_audit(ens, L);
      const auto t = tschebyscheff_check(ens, L);
      if (!g.pass) ++envelope_fail[q];
      envelope_worst[q] = std::max(envelope_worst[q], -g.min_margin);
      if (!t.pass) ++tsch_fail;
      json taus = json::array();
      for (const auto& w : ens) taus.push_back(stopping_time(w.times, w.gradient_sup, w.horizon, L));
      json stopped = json::array();
      for (const auto& e : g.stopped) stopped.push_back(e.mean);
      per_l.push_back({{"L", L},
                       {"tau", taus},
                       {"times", g.times},
                       {"mean_stopped_F", stopped},
                       {"envelope", g.envelope},
                       {"min_margin", g.min_margin},
                       {"sup_stopped_F", estimate_json(g.sup_stopped)},
                       {"pass", g.pass},
                       {"tschebyscheff", {{"probability", estimate_json(t.probability)},
                                          {"bound", t.bound},
                                          {"pass", t.pass}}}});
      if (q + 1 == c.weakstrong.L.size()) sup_at_max_l.push_back(g.sup_stopped);
    }
    gron.push_back({{"viscosity", c.viscosities[l]}, {"audits", per_l}});
  }
  report["gronwall"] = gron;
  std::size_t ladder_violations = 0;
  json sups = json::array();
  for (std::size_t l = 0; l < sup_at_max_l.size(); ++l) {
    sups.push_back(estimate_json(sup_at_max_l[l]));
    if (l > 0 && sup_at_max_l[l].mean - sup_at_max_l[l - 1].mean >
                     sup_at_max_l[l].half_width + sup_at_max_l[l - 1].half_width)
      ++ladder_violations;
  }
  report["sup_stopped_F_along_ladder"] = sups;

  audits.add("runs completed without blow-up", "weak_strong/strong_reference", static_cast<double>(failures), 0.0);
  audits.add("F(0) = 0", "weak_strong/relative_energy", f0, 1e-10);
  audits.add("F >= 0", "weak_strong/relative_energy", negativity, 1e-12);
  audits.add("measure and expanded forms of F agree", "weak_strong/relative_energy", forms,
             c.tolerances.relative_energy_forms, "relative difference");
  for (std::size_t q = 0; q < c.weakstrong.L.size(); ++q)
    audits.add("Gronwall envelope, L = " + fmt(c.weakstrong.L[q]), "weak_strong/gronwall_audit", envelope_worst[q], 0.0,
               "value = max_t (E[F(t ^ tau_L)] - envelope)");
  audits.add("sup E[F] non-increasing along the ladder", "weak_strong/gronwall_audit",
             static_cast<double>(ladder_violations), 0.0, "within combined 95% CIs");
  audits.add("Tschebyscheff bound on P[tau_L < horizon]", "weak_strong/stopping_time", static_cast<double>(tsch_fail),
             0.0);
  return report;
}

}  // namespace

RunConfig parse_config(const json& root, const std::string& experiment, std::optional<std::uint64_t> seed_override) {
  if (std::find(kExperiments.begin(), kExperiments.end(), experiment) == kExperiments.end())
    throw ConfigError("experiment", "unknown experiment '" + experiment + "'");
  check_object(root, "", {"experiment", "seed", "grid", "time", "viscosity", "viscosities", "transport", "forcing",
                          "initial", "paths", "measure", "probes", "martingale", "weakstrong", "tolerances",
                          "apriori"});
  RunConfig c;
  c.experiment = experiment;
  if (root.contains("experiment") && text(root, "", "experiment", std::nullopt) != experiment)
    throw ConfigError("experiment", "config is for '" + root.at("experiment").get<std::string>() +
                                        "' but the subcommand is '" + experiment + "'");
  if (seed_override) {
    c.seed = *seed_override;
  } else {
    if (!root.contains("seed")) throw ConfigError("seed", "required (in the config or via --seed)");
    if (!root.at("seed").is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = root.at("seed").get<std::uint64_t>();
  }

  if (!root.contains("grid")) throw ConfigError("grid", "required object missing");
  const auto& g = root.at("grid");
  check_object(g, "grid", {"dim", "n"});
  const int dim = static_cast<int>(integer(g, "grid", "dim", 2));
  const int n = static_cast<int>(integer(g, "grid", "n", std::nullopt));
  c.solver.grid = wrap("grid", [&] { return TorusGrid(dim, n); });

  if (!root.contains("time")) throw ConfigError("time", "required object missing");
  const auto& t = root.at("time");
  check_object(t, "time", {"dt", "horizon", "snapshot_every", "refinement", "cfl", "max_cfl_refinement",
                           "blowup_ceiling"});
  c.solver.dt = number(t, "time", "dt", std::nullopt);
  c.solver.horizon = number(t, "time", "horizon", std::nullopt);
  const auto every = integer(t, "time", "snapshot_every", 0);
  if (every < 0) throw ConfigError("time.snapshot_every", "must be >= 0");
  c.solver.snapshot_every = static_cast<std::size_t>(every);
  c.solver.refinement = static_cast<int>(integer(t, "time", "refinement", 0));
  c.solver.cfl = number(t, "time", "cfl", 0.5);
  c.solver.max_cfl_refinement = static_cast<int>(integer(t, "time", "max_cfl_refinement", 10));
  c.solver.blowup_ceiling = number(t, "time", "blowup_ceiling", 1e3);
  c.solver.transport = boolean(root, "", "transport", true);

  const bool single = experiment == "simulate" || experiment == "martingale";
  if (single) {
    if (root.contains("viscosities")) throw ConfigError("viscosities", "not used by " + experiment + "; use viscosity");
    c.solver.viscosity = number(root, "", "viscosity", std::nullopt);
    c.viscosities = {c.solver.viscosity};
  } else {
    if (root.contains("viscosity")) throw ConfigError("viscosity", "not used by " + experiment + "; use viscosities");
    if (!root.contains("viscosities")) throw ConfigError("viscosities", "required array missing");
    c.viscosities = numbers(root.at("viscosities"), "viscosities");
    if (c.viscosities.empty()) throw ConfigError("viscosities", "must not be empty");
    for (std::size_t i = 0; i < c.viscosities.size(); ++i) {
      if (!(c.viscosities[i] > 0.0)) throw ConfigError(index_path("viscosities", i), "must be > 0");
      if (i > 0 && !(c.viscosities[i] < c.viscosities[i - 1]))
        throw ConfigError(index_path("viscosities", i), "must be strictly decreasing");
    }
    c.solver.viscosity = c.viscosities.front();
  }

  c.solver.forcing = parse_forcing(root, dim);
  c.solver.initial = parse_initial(root, dim);
  c.solver.probes = parse_probes(root, c.solver.grid);
  const auto paths = integer(root, "", "paths", 1);
  if (paths < 1) throw ConfigError("paths", "must be >= 1");
  c.paths = static_cast<std::size_t>(paths);

  c.partition.dim = dim;
  c.partition.horizon = c.solver.horizon;
  c.partition.cells_per_axis = std::min(n, 16);
  c.partition.time_slabs = 1;
  if (root.contains("measure")) {
    const auto& m = root.at("measure");
    check_object(m, "measure", {"cells_per_axis", "time_slabs", "radius", "bins_per_axis", "sphere_bins",
                                "radius_sweep"});
    c.partition.cells_per_axis = static_cast<int>(integer(m, "measure", "cells_per_axis", c.partition.cells_per_axis));
    c.partition.time_slabs = static_cast<std::size_t>(integer(m, "measure", "time_slabs", 1));
    c.bins.radius = number(m, "measure", "radius", c.bins.radius);
    c.bins.bins_per_axis = static_cast<int>(integer(m, "measure", "bins_per_axis", c.bins.bins_per_axis));
    c.bins.sphere_bins = static_cast<int>(integer(m, "measure", "sphere_bins", c.bins.sphere_bins));
    if (m.contains("radius_sweep")) c.radius_sweep = numbers(m.at("radius_sweep"), "measure.radius_sweep");
  }
  if (n % c.partition.cells_per_axis != 0) throw ConfigError("measure.cells_per_axis", "must divide grid.n");
  wrap("measure", [&] {
    c.partition.validate();
    c.bins.validate(dim);
    return 0;
  });

  if (root.contains("tolerances")) {
    const auto& tj = root.at("tolerances");
    check_object(tj, "tolerances", {"energy_constant", "barycenter", "relative_energy_forms", "divergence"});
    c.tolerances.energy_constant = number(tj, "tolerances", "energy_constant", c.tolerances.energy_constant);
    c.tolerances.barycenter = number(tj, "tolerances", "barycenter", c.tolerances.barycenter);
    c.tolerances.relative_energy_forms =
        number(tj, "tolerances", "relative_energy_forms", c.tolerances.relative_energy_forms);
    c.tolerances.divergence = number(tj, "tolerances", "divergence", c.tolerances.divergence);
    for (const char* key : {"energy_constant", "barycenter", "relative_energy_forms", "divergence"})
      if (tj.contains(key) && tj.at(key).get<double>() < 0.0) throw ConfigError(join("tolerances", key), "must be >= 0");
  }
  if (root.contains("apriori")) {
    check_object(root.at("apriori"), "apriori", {"p"});
    c.apriori_p = number(root.at("apriori"), "apriori", "p", 3.0);
    if (!(c.apriori_p > 2.0)) throw ConfigError("apriori.p", "must exceed 2");
  }

  wrap("time", [&] {
    c.solver.validate();
    return 0;
  });
  const std::size_t steps = c.solver.steps();

  if (experiment == "vanish" || experiment == "ym") {
    if (c.solver.snapshot_every == 0) throw ConfigError("time.snapshot_every", "must be >= 1 for " + experiment);
    const double per_slab = c.partition.slab_duration() / (c.solver.dt * static_cast<double>(c.solver.snapshot_every));
    if (per_slab < 1.0 - 1e-9 || std::abs(per_slab - std::round(per_slab)) > 1e-9)
      throw ConfigError("measure.time_slabs", "each slab must hold a whole, positive number of snapshots");
  }

  if (experiment == "martingale") {
    if (c.solver.probes.empty()) throw ConfigError("probes", "martingale needs at least one probe field");
    c.martingale.probes.clear();
    for (std::size_t i = 0; i < c.solver.probes.size(); ++i) c.martingale.probes.push_back(i);
    if (!root.contains("martingale")) throw ConfigError("martingale", "required object missing");
    const auto& m = root.at("martingale");
    check_object(m, "martingale", {"windows", "histories", "modes", "confidence"});
    if (!m.contains("windows") || !m.at("windows").is_array() || m.at("windows").empty())
      throw ConfigError("martingale.windows", "expected a non-empty array of [s, t] pairs");
    for (std::size_t i = 0; i < m.at("windows").size(); ++i) {
      const std::string p = index_path("martingale.windows", i);
      const auto w = numbers(m.at("windows")[i], p);
      if (w.size() != 2 || !(w[0] < w[1])) throw ConfigError(p, "expected [s, t] with s < t");
      const std::size_t s = step_index(w[0], c.solver.dt, p);
      const std::size_t e = step_index(w[1], c.solver.dt, p);
      if (e > steps) throw ConfigError(p, "t beyond the horizon");
      c.martingale.windows.emplace_back(s, e);
    }
    c.martingale.histories.clear();
    if (m.contains("histories")) {
      const auto& hs = m.at("histories");
      if (!hs.is_array()) throw ConfigError("martingale.histories", "expected an array");
      for (std::size_t i = 0; i < hs.size(); ++i) {
        const std::string p = index_path("martingale.histories", i);
        check_object(hs[i], p, {"kind", "scale", "mode"});
        HistoryFunctional h;
        const std::string kind = text(hs[i], p, "kind", std::nullopt);
        if (kind == "constant") {
          h.kind = HistoryFunctional::Kind::Constant;
        } else if (kind == "pairing") {
          h.kind = HistoryFunctional::Kind::ClampedPairing;
        } else if (kind == "beta") {
          h.kind = HistoryFunctional::Kind::ClampedBeta;
          const auto mode = integer(hs[i], p, "mode", std::nullopt);
          if (mode < 1 || static_cast<std::size_t>(mode) > c.solver.forcing.rank())
            throw ConfigError(join(p, "mode"), "expected a forcing mode index in 1..rank");
          h.mode = static_cast<std::size_t>(mode - 1);
        } else {
          throw ConfigError(join(p, "kind"), "expected constant, pairing or beta");
        }
        h.scale = number(hs[i], p, "scale", 1.0);
        if (!(h.scale > 0.0)) throw ConfigError(join(p, "scale"), "must be > 0");
        c.martingale.histories.push_back(h);
      }
    } else {
      c.martingale.histories.push_back({});
    }
    if (m.contains("modes")) {
      const auto modes = numbers(m.at("modes"), "martingale.modes");
      for (std::size_t i = 0; i < modes.size(); ++i) {
        if (modes[i] < 1 || modes[i] > static_cast<double>(c.solver.forcing.rank()) || modes[i] != std::floor(modes[i]))
          throw ConfigError(index_path("martingale.modes", i), "expected a forcing mode index in 1..rank");
        c.martingale.modes.push_back(static_cast<std::size_t>(modes[i]) - 1);
      }
    } else {
      for (std::size_t k = 0; k < c.solver.forcing.rank(); ++k) c.martingale.modes.push_back(k);
    }
    c.martingale.confidence = number(m, "martingale", "confidence", 0.95);
    if (!(c.martingale.confidence > 0.0 && c.martingale.confidence < 1.0))
      throw ConfigError("martingale.confidence", "must lie in (0, 1)");
    if (c.paths < kMinMartingaleEnsemble)
      throw ConfigError("paths", "martingale needs at least " + std::to_string(kMinMartingaleEnsemble) + " paths");
  } else if (root.contains("martingale")) {
    throw ConfigError("martingale", "only used by the martingale experiment");
  }

  if (experiment == "weakstrong") {
    if (c.solver.snapshot_every == 0 || steps % c.solver.snapshot_every != 0)
      throw ConfigError("time.snapshot_every", "must be >= 1 and divide the number of steps");
    if (root.contains("weakstrong")) {
      const auto& w = root.at("weakstrong");
      check_object(w, "weakstrong", {"reference_n", "dt_refinement", "tail_threshold", "L"});
      c.weakstrong.reference.n = static_cast<int>(integer(w, "weakstrong", "reference_n", 128));
      c.weakstrong.reference.dt_refinement = static_cast<int>(integer(w, "weakstrong", "dt_refinement", 2));
      c.weakstrong.reference.tail_threshold = number(w, "weakstrong", "tail_threshold", 1e-6);
      if (w.contains("L")) c.weakstrong.L = numbers(w.at("L"), "weakstrong.L");
    }
    if (c.weakstrong.L.empty()) throw ConfigError("weakstrong.L", "must not be empty");
    for (std::size_t i = 0; i < c.weakstrong.L.size(); ++i)
      if (!(c.weakstrong.L[i] > 0.0)) throw ConfigError(index_path("weakstrong.L", i), "must be > 0");
    std::sort(c.weakstrong.L.begin(), c.weakstrong.L.end());
    wrap("weakstrong", [&] { return reference_config(c.solver, c.weakstrong.reference); });
  } else if (root.contains("weakstrong")) {
    throw ConfigError("weakstrong", "only used by the weakstrong experiment");
  }

  c.echo = root;
  c.echo["experiment"] = experiment;
  c.echo["seed"] = c.seed;
  return c;
}

RunConfig load_config(const fs::path& path, const std::string& experiment, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json root;
  try {
    root = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(root, experiment, seed_override);
}

RunOutcome run_experiment(const RunConfig& c, const fs::path& out, int threads) {
  if (fs::exists(out) && !fs::is_empty(out))
    throw std::runtime_error("output directory " + out.string() + " is not empty; runs never overwrite artifacts");
  fs::create_directories(out);
  write_json(out / "config.json", c.echo);
  Audits audits;
  json report;
  if (c.experiment == "simulate")
    report = run_simulate(c, out, threads, audits);
  else if (c.experiment == "vanish")
    report = run_vanish(c, out, threads, audits);
  else if (c.experiment == "ym")
    report = run_ym(c, out, threads, audits);
  else if (c.experiment == "martingale")
    report = run_martingale(c, out, threads, audits);
  else
    report = run_weakstrong(c, out, threads, audits);
  report["experiment"] = c.experiment;
  report["seed"] = c.seed;
  report["audits"] = audits.to_json();
  report["pass"] = audits.pass();
  write_json(out / "report.json", report);
  write_manifest(out, {{"experiment", c.experiment}, {"seed", c.seed}, {"format", 1}});
  RunOutcome outcome;
  outcome.pass = audits.pass();
  outcome.exit_code = outcome.pass ? 0 : 1;
  return outcome;
}

}  // namespace dissipeuler
