#include "dissipeuler/weak_strong.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dissipeuler {

namespace {

const Snapshot* snapshot_at(const Trajectory& u, double t) {
  for (const auto& s : u)
    if (std::abs(s.time - t) <= 1e-9 * std::max(1.0, std::abs(t))) return &s;
  return nullptr;
}

double contract(const Vec3& a, const Vec3& b, const std::array<double, 9>& g, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) s += a[i] * b[j] * g[i * dim + j];
  return s;
}

// Index of the last time not exceeding t.
std::size_t index_at_or_before(std::span<const double> times, double t) {
  std::size_t idx = 0;
  for (std::size_t j = 0; j < times.size(); ++j)
    if (times[j] <= t + 1e-12 * std::max(1.0, std::abs(t))) idx = j;
  return idx;
}

double energy_outside_band(const SpectralField& v, int cutoff) {
  const auto& grid = v.grid();
  double sum = 0.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const auto k = grid.wavevector(idx);
    bool outside = false;
    for (int d = 0; d < grid.dim(); ++d) outside = outside || std::abs(k[d]) > cutoff;
    if (!outside) continue;
    double e = 0.0;
    for (int c = 0; c < grid.dim(); ++c) e += std::norm(v.at(c, idx));
    sum += grid.mode_weight(idx) * e;
  }
  return 0.5 * grid.volume() * sum;
}

}  // namespace

SolverConfig reference_config(const SolverConfig& weak, const StrongReferenceOptions& options) {
  if (options.dt_refinement < 0) throw std::invalid_argument("reference: dt_refinement must be >= 0");
  if (options.n < weak.grid.n() || options.n % weak.grid.n() != 0)
    throw std::invalid_argument("reference: grid must refine the weak candidate's grid");
  SolverConfig cfg = weak;
  cfg.grid = TorusGrid(weak.grid.dim(), options.n);
  cfg.viscosity = 0.0;
  cfg.dt = std::ldexp(weak.dt, -options.dt_refinement);
  cfg.refinement = weak.refinement + options.dt_refinement;
  cfg.snapshot_every = weak.snapshot_every << options.dt_refinement;
  cfg.probes.clear();
  return cfg;
}

StrongReference strong_reference(const SolverConfig& weak, std::uint64_t seed, std::uint64_t path_id,
                                 const StrongReferenceOptions& options) {
  const SolverConfig cfg = reference_config(weak, options);
  StrongReference ref;
  PathResult run;
  double cut = cfg.horizon;
  try {
    run = run_path(cfg, seed, path_id);
  } catch (const BlowUpError& e) {
    ref.error = e.what();
    if (e.partial()) run = *e.partial();
    cut = e.time();
  }
  ref.horizon = cut;
  for (auto& snap : run.snapshots) {
    ref.gradient_sup.push_back(gradient_sup_norm(snap.field));
    ref.gradient_l2_sq.push_back(gradient_norm_sq(snap.field));
    ref.tail_fraction.push_back(tail_energy_fraction(snap.field));
    if (ref.tail_fraction.back() > options.tail_threshold) ref.horizon = std::min(ref.horizon, snap.time);
    ref.v.push_back(std::move(snap));
  }
  const auto& trace = run.trace;
  for (std::size_t n = 0; n < trace.size(); ++n)
    if (trace.time[n] <= ref.horizon + 1e-12)
      ref.energy_equality_residual =
          std::max(ref.energy_equality_residual, std::abs(trace.potential(n) - trace.potential(0)));
  return ref;
}

RelativeEnergy relative_energy(const GeneralizedYoungMeasure& measure, const SpectralField& v, std::size_t slab) {
  const auto& part = measure.partition();
  if (slab >= part.time_slabs) throw std::out_of_range("relative_energy: slab out of range");
  const auto vc = field_at_centres(v, measure);
  const int dim = part.dim;
  const double vol = part.cell_volume();
  double spread = 0.0;
  double v_sq = 0.0;
  double cross = 0.0;
  for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
    const auto& cell = measure.cell(slab, c);
    for (const auto& a : cell.nu) {
      double d2 = 0.0;
      for (int d = 0; d < dim; ++d) d2 += (a.centroid[d] - vc[c][d]) * (a.centroid[d] - vc[c][d]);
      spread += a.weight * d2;
    }
    const Vec3 b = barycenter(measure, slab, c);
    for (int d = 0; d < dim; ++d) {
      v_sq += vc[c][d] * vc[c][d];
      cross += b[d] * vc[c][d];
    }
  }
  RelativeEnergy out;
  out.measure_form = 0.5 * spread * vol + 0.5 * measure.lambda_t(slab);
  out.expanded_form = energy_of(measure, slab) + 0.5 * v_sq * vol - cross * vol;
  return out;
}

double stopping_time(std::span<const double> times, std::span<const double> gradient_sup, double horizon, double L) {
  if (!(L > 0.0)) throw std::invalid_argument("stopping_time: L must be > 0");
  for (std::size_t j = 0; j < times.size() && j < gradient_sup.size(); ++j) {
    if (times[j] >= horizon) break;
    if (gradient_sup[j] > L) return times[j];
  }
  return horizon;
}

double stopping_time(const StrongReference& ref, double L) {
  std::vector<double> times;
  for (const auto& s : ref.v) times.push_back(s.time);
  return stopping_time(times, ref.gradient_sup, ref.horizon, L);
}

CrossTermCheck crossterm_identity_check(const GeneralizedYoungMeasure& measure, const Trajectory& v,
                                        std::size_t slab_begin, std::size_t slab_end) {
  const auto& part = measure.partition();
  const int dim = part.dim;
  const double vol = part.cell_volume() * part.slab_duration();
  CrossTermCheck out;
  for (std::size_t s = slab_begin; s < std::min(slab_end, part.time_slabs); ++s) {
    const Snapshot* snap = snapshot_at(v, part.slab_start(s));
    if (!snap) throw std::invalid_argument("crossterm_identity_check: reference lacks a snapshot at a slab start");
    const auto vc = field_at_centres(snap->field, measure);
    const auto g = gradient_at_centres(snap->field, measure);
    for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
      const auto& cell = measure.cell(s, c);
      double conv = 0.0;
      double rel = 0.0;
      for (const auto& a : cell.nu) {
        Vec3 diff{0.0, 0.0, 0.0};
        for (int d = 0; d < dim; ++d) diff[d] = a.centroid[d] - vc[c][d];
        conv += a.weight * contract(a.centroid, a.centroid, g[c], dim);
        rel += a.weight * contract(diff, diff, g[c], dim);
      }
      double inf = 0.0;
      if (cell.lambda > 0.0)
        for (const auto& a : cell.nu_inf) inf += a.weight * contract(a.centroid, a.centroid, g[c], dim);
      out.a_convective += conv * vol + inf * cell.lambda;
      out.rhs += rel * vol + inf * cell.lambda;
      // (v . grad) v at the centre, paired with the barycenter.
      const Vec3 b = barycenter(measure, s, c);
      double transport = 0.0;
      for (int i = 0; i < dim; ++i) {
        double vgv = 0.0;
        for (int j = 0; j < dim; ++j) vgv += vc[c][j] * g[c][i * dim + j];
        transport += b[i] * vgv;
      }
      out.a_transport -= transport * vol;
    }
  }
  out.residual = std::abs(out.a_convective + out.a_transport - out.rhs);
  return out;
}

std::vector<double> weak_strong_slack(const StrongReference& ref, const EnergyTrace& weak_trace,
                                      const TorusGrid& weak_grid, double viscosity, std::span<const double> times) {
  std::vector<double> ref_times;
  for (const auto& s : ref.v) ref_times.push_back(s.time);
  // Running maximum of the candidate's positive energy defect.
  std::vector<double> defect_prefix(weak_trace.size(), 0.0);
  {
    std::size_t argmin = 0;
    double best = 0.0;
    for (std::size_t n = 1; n < weak_trace.size(); ++n) {
      best = std::max(best, weak_trace.potential(n) - weak_trace.potential(argmin));
      if (weak_trace.potential(n) < weak_trace.potential(argmin)) argmin = n;
      defect_prefix[n] = best;
    }
  }
  std::vector<double> out;
  for (double t : times) {
    const std::size_t r = index_at_or_before(ref_times, t);
    double viscous = 0.0;
    for (std::size_t j = 0; j < r; ++j)
      viscous += 0.5 * (ref.gradient_l2_sq[j] + ref.gradient_l2_sq[j + 1]) * (ref_times[j + 1] - ref_times[j]);
    viscous *= viscosity / 4.0;
    const double band = energy_outside_band(ref.v[r].field, weak_grid.dealias_cutoff());
    const std::size_t w = index_at_or_before(weak_trace.time, t);
    const double defect = weak_trace.size() > 0 ? defect_prefix[w] : 0.0;
    out.push_back(viscous + band + defect + ref.energy_equality_residual);
  }
  return out;
}

WeakStrongPath compare_paths(const GeneralizedYoungMeasure& weak_measure, const StrongReference& ref,
                             const EnergyTrace& weak_trace, const TorusGrid& weak_grid, double viscosity,
                             std::uint64_t path_id) {
  const auto& part = weak_measure.partition();
  WeakStrongPath out;
  out.path_id = path_id;
  out.horizon = ref.horizon;
  for (std::size_t s = 0; s < part.time_slabs; ++s) {
    const double t = part.slab_start(s);
    std::size_t idx = ref.v.size();
    for (std::size_t j = 0; j < ref.v.size(); ++j)
      if (std::abs(ref.v[j].time - t) <= 1e-9 * std::max(1.0, t)) idx = j;
    if (idx == ref.v.size()) break;  // reference cut short
    const auto re = relative_energy(weak_measure, ref.v[idx].field, s);
    out.times.push_back(t);
    out.f_measure.push_back(re.measure_form);
    out.f_expanded.push_back(re.expanded_form);
    out.gradient_sup.push_back(ref.gradient_sup[idx]);
  }
  out.slack = weak_strong_slack(ref, weak_trace, weak_grid, viscosity, out.times);
  return out;
}

GronwallReport gronwall_audit(const std::vector<WeakStrongPath>& paths, double L) {
  if (paths.empty()) throw std::invalid_argument("gronwall_audit: no paths");
  GronwallReport report;
  report.L = L;
  std::size_t steps = paths.front().times.size();
  for (const auto& p : paths) steps = std::min(steps, p.times.size());
  if (steps == 0) throw std::invalid_argument("gronwall_audit: empty relative-energy traces");
  report.times.assign(paths.front().times.begin(), paths.front().times.begin() + static_cast<long>(steps));

  std::vector<double> tau;
  std::vector<double> f0;
  for (const auto& p : paths) {
    tau.push_back(stopping_time(p.times, p.gradient_sup, p.horizon, L));
    f0.push_back(p.f_measure.front());
  }
  const double mean_f0 = estimate_mean(f0).mean;
  report.pass = true;
  report.min_margin = std::numeric_limits<double>::infinity();
  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < steps; ++j) {
    const double t = report.times[j];
    std::vector<double> stopped;
    std::vector<double> slack;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto& p = paths[i];
      const std::size_t k = index_at_or_before(std::span<const double>(p.times.data(), steps), std::min(t, tau[i]));
      stopped.push_back(p.f_measure[k]);
      slack.push_back(p.slack[k]);
    }
    const Estimate e = estimate_mean(stopped);
    const double env = (mean_f0 + estimate_mean(slack).mean) * std::exp(L * t);
    report.stopped.push_back(e);
    report.envelope.push_back(env);
    report.min_margin = std::min(report.min_margin, env - e.mean);
    if (e.mean > env) report.pass = false;
    if (e.mean > best_mean) {
      best_mean = e.mean;
      report.sup_stopped = e;
    }
  }
  return report;
}

TschebyscheffCheck tschebyscheff_check(const std::vector<WeakStrongPath>& paths, double L) {
  if (paths.empty()) throw std::invalid_argument("tschebyscheff_check: no paths");
  TschebyscheffCheck out;
  out.L = L;
  std::vector<double> hits;
  std::vector<double> sups;
  for (const auto& p : paths) {
    const double tau = stopping_time(p.times, p.gradient_sup, p.horizon, L);
    hits.push_back(tau < p.horizon ? 1.0 : 0.0);
    double sup = 0.0;
    for (std::size_t j = 0; j < p.times.size(); ++j)
      if (p.times[j] < p.horizon) sup = std::max(sup, p.gradient_sup[j]);
    sups.push_back(sup);
  }
  out.probability = estimate_mean(hits);
  out.mean_sup = estimate_mean(sups);
  out.bound = out.mean_sup.mean / L;
  out.pass = out.probability.mean <= out.bound + out.probability.half_width + out.mean_sup.half_width / L;
  return out;
}

}  // namespace dissipeuler
