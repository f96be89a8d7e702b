#include "dissipeuler/limit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dissipeuler/parallel.hpp"

namespace dissipeuler {

namespace {

bool centres_on_grid(const SpectralField& f, const GeneralizedYoungMeasure& v) {
  return v.sample_grid_n() == v.partition().cells_per_axis && f.grid().n() % v.sample_grid_n() == 0;
}

std::vector<Vec3> centres(const GeneralizedYoungMeasure& v) {
  std::vector<Vec3> out;
  for (std::size_t c = 0; c < v.partition().cells_per_slab(); ++c) out.push_back(v.cell_centre(c));
  return out;
}

// Direct evaluation of the Fourier series; `multiplier_axis` >= 0 differentiates
// along that axis.
std::vector<Vec3> evaluate_series(const SpectralField& f, const std::vector<Vec3>& points, int multiplier_axis) {
  const auto& grid = f.grid();
  const int dim = grid.dim();
  std::vector<Vec3> out(points.size(), Vec3{0.0, 0.0, 0.0});
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    bool nonzero = false;
    for (int c = 0; c < dim; ++c) nonzero = nonzero || f.at(c, idx) != Complex(0.0, 0.0);
    if (!nonzero) continue;
    const Wavevector k = grid.wavevector(idx);
    const Vec3 kd = grid.derivative_wavevector(idx);
    const double w = grid.mode_weight(idx);
    Complex factor = 1.0;
    if (multiplier_axis >= 0) factor = Complex(0.0, kd[multiplier_axis]);
    for (std::size_t p = 0; p < points.size(); ++p) {
      double phase = 0.0;
      for (int d = 0; d < dim; ++d) phase += k[d] * points[p][d];
      const Complex e = factor * std::polar(1.0, phase);
      for (int c = 0; c < dim; ++c) out[p][c] += w * (f.at(c, idx) * e).real();
    }
  }
  return out;
}

std::vector<Vec3> subsample(const PhysicalField& phys, int target_n) {
  const auto coarse = restrict_to(phys, TorusGrid(phys.grid().dim(), target_n));
  std::vector<Vec3> out(coarse.grid().physical_size(), Vec3{0.0, 0.0, 0.0});
  for (std::size_t p = 0; p < out.size(); ++p)
    for (int c = 0; c < coarse.grid().dim(); ++c) out[p][c] = coarse.at(c, p);
  return out;
}

const Snapshot* snapshot_at(const Trajectory& u, double t) {
  for (const auto& s : u)
    if (std::abs(s.time - t) <= 1e-9 * std::max(1.0, std::abs(t))) return &s;
  return nullptr;
}

}  // namespace

void ViscosityLadder::validate() const {
  if (viscosities.empty()) throw std::invalid_argument("ladder: empty viscosity list");
  for (std::size_t i = 0; i < viscosities.size(); ++i) {
    if (!(viscosities[i] > 0.0)) throw std::invalid_argument("ladder: viscosities must be > 0");
    if (i > 0 && !(viscosities[i] < viscosities[i - 1]))
      throw std::invalid_argument("ladder: viscosities must be strictly decreasing");
  }
  if (path_ids.empty()) throw std::invalid_argument("ladder: no paths");
  partition.validate();
  bins.validate(partition.dim);
  if (partition.dim != base.grid.dim()) throw std::invalid_argument("ladder: partition dimension mismatch");
  base.validate();
}

SolverConfig ViscosityLadder::level_config(std::size_t level) const {
  SolverConfig cfg = base;
  cfg.viscosity = viscosities.at(level);
  return cfg;
}

std::vector<Vec3> cell_averages(const PhysicalTrajectory& u, const Partition& partition) {
  std::vector<Vec3> sum(partition.cell_count(), Vec3{0.0, 0.0, 0.0});
  std::vector<double> count(partition.cell_count(), 0.0);
  for (const auto& snap : u) {
    const auto slab = partition.slab_of(snap.time);
    if (!slab) continue;
    const auto& g = snap.field.grid();
    for (std::size_t p = 0; p < g.physical_size(); ++p) {
      const std::size_t i = *slab * partition.cells_per_slab() + partition.cell_of_point(p, g.n());
      for (int c = 0; c < g.dim(); ++c) sum[i][c] += snap.field.at(c, p);
      count[i] += 1.0;
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i)
    if (count[i] > 0.0)
      for (double& x : sum[i]) x /= count[i];
  return sum;
}

std::vector<Vec3> field_at_centres(const SpectralField& f, const GeneralizedYoungMeasure& v) {
  if (f.grid().dim() != v.partition().dim) throw std::invalid_argument("field_at_centres: dimension mismatch");
  if (centres_on_grid(f, v)) return subsample(to_physical(f), v.sample_grid_n());
  return evaluate_series(f, centres(v), -1);
}

std::vector<std::array<double, 9>> gradient_at_centres(const SpectralField& f, const GeneralizedYoungMeasure& v) {
  const int dim = f.grid().dim();
  if (dim != v.partition().dim) throw std::invalid_argument("gradient_at_centres: dimension mismatch");
  const std::size_t cells = v.partition().cells_per_slab();
  std::vector<std::array<double, 9>> out(cells, std::array<double, 9>{});
  if (centres_on_grid(f, v)) {
    const auto grad = gradient(f);
    for (int j = 0; j < dim; ++j) {
      const auto values = subsample(to_physical(grad[j]), v.sample_grid_n());
      for (std::size_t c = 0; c < cells; ++c)
        for (int i = 0; i < dim; ++i) out[c][i * dim + j] = values[c][i];
    }
    return out;
  }
  const auto pts = centres(v);
  for (int j = 0; j < dim; ++j) {
    const auto values = evaluate_series(f, pts, j);
    for (std::size_t c = 0; c < cells; ++c)
      for (int i = 0; i < dim; ++i) out[c][i * dim + j] = values[c][i];
  }
  return out;
}

double flux_pairing(const GeneralizedYoungMeasure& v, std::size_t slab_begin, std::size_t slab_end,
                    const std::vector<std::array<double, 9>>& g) {
  const auto& part = v.partition();
  const int dim = part.dim;
  if (g.size() != part.cells_per_slab()) throw std::invalid_argument("flux_pairing: one tensor per cell required");
  const double vol = part.cell_volume() * part.slab_duration();
  auto contract = [dim](const Vec3& a, const std::array<double, 9>& m) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) s += a[i] * a[j] * m[i * dim + j];
    return s;
  };
  double total = 0.0;
  for (std::size_t s = slab_begin; s < std::min(slab_end, part.time_slabs); ++s) {
    for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
      const auto& cell = v.cell(s, c);
      double nu = 0.0;
      for (const auto& a : cell.nu) nu += a.weight * contract(a.centroid, g[c]);
      double inf = 0.0;
      if (cell.lambda > 0.0)
        for (const auto& a : cell.nu_inf) inf += a.weight * contract(a.centroid, g[c]);
      total += nu * vol + inf * cell.lambda;
    }
  }
  return total;
}

LadderResult run_ladder(const ViscosityLadder& ladder, int threads, bool keep_trajectories) {
  ladder.validate();
  const std::size_t levels = ladder.viscosities.size();
  LadderResult result;
  result.viscosities = ladder.viscosities;
  result.paths.resize(ladder.path_ids.size());

  parallel_for(ladder.path_ids.size(), threads, [&](std::size_t i) {
    LadderPath lp;
    lp.path_id = ladder.path_ids[i];
    lp.errors.assign(levels, "");
    std::vector<PhysicalTrajectory> phys(levels);
    for (std::size_t l = 0; l < levels; ++l) {
      PathResult run;
      try {
        run = run_path(ladder.level_config(l), ladder.seed, lp.path_id);
      } catch (const BlowUpError& e) {
        lp.errors[l] = e.what();
        if (e.partial()) run = *e.partial();
      }
      phys[l] = to_physical(run.snapshots);
      lp.measures.push_back(dirac_embed(phys[l], ladder.partition, ladder.bins));
      const auto bary = barycenter(lp.measures.back());
      const auto avg = cell_averages(phys[l], ladder.partition);
      for (std::size_t c = 0; c < bary.size(); ++c)
        for (int d = 0; d < ladder.partition.dim; ++d)
          lp.barycenter_error = std::max(lp.barycenter_error, std::abs(bary[c][d] - avg[c][d]));
      if (keep_trajectories) lp.levels.push_back(std::move(run));
    }
    const auto dictionary = default_dictionary(ladder.partition.dim, ladder.partition.horizon);
    for (std::size_t l = 0; l + 1 < levels; ++l)
      lp.successive_distance.push_back(weakstar_distance(lp.measures[l], lp.measures[l + 1], dictionary));
    std::vector<const PhysicalTrajectory*> tail;
    for (std::size_t l = ladder.tail_begin(); l < levels; ++l) tail.push_back(&phys[l]);
    lp.family.emplace(estimate_from_family(tail, ladder.partition, ladder.bins));
    result.paths[i] = std::move(lp);
  });

  for (const auto& p : result.paths)
    for (const auto& e : p.errors)
      if (!e.empty()) result.completed = false;
  if (levels > 1) {
    result.mean_distance.assign(levels - 1, 0.0);
    for (std::size_t l = 0; l + 1 < levels; ++l) {
      CompensatedSum sum;
      for (const auto& p : result.paths) sum.add(p.successive_distance[l]);
      result.mean_distance[l] = sum.value() / static_cast<double>(result.paths.size());
      if (l > 0 && !(result.mean_distance[l] < result.mean_distance[l - 1])) result.strictly_decreasing = false;
    }
  }
  return result;
}

MomentumResidual momentum_residual(const GeneralizedYoungMeasure& v, const Trajectory& u, const ForcingOperator& phi_op,
                                   std::span<const double> beta_t, const SpectralField& phi, double t,
                                   double viscosity) {
  const auto& part = v.partition();
  MomentumResidual out;
  out.time = t;
  const double slabs_exact = t / part.slab_duration();
  const auto slab_end = static_cast<std::size_t>(std::llround(slabs_exact));
  if (std::abs(slabs_exact - static_cast<double>(slab_end)) > 1e-9 || slab_end > part.time_slabs)
    throw std::invalid_argument("momentum_residual: t must be a slab boundary inside [0, T]");
  const Snapshot* s0 = snapshot_at(u, 0.0);
  const Snapshot* st = snapshot_at(u, t);
  if (!s0 || !st) throw std::invalid_argument("momentum_residual: trajectory lacks a snapshot at 0 or t");
  if (!(s0->field.grid() == phi.grid()))
    throw std::invalid_argument("momentum_residual: test field and trajectory on different grids");
  if (beta_t.size() != phi_op.rank()) throw std::invalid_argument("momentum_residual: beta has wrong rank");

  out.lhs = inner_product(st->field, phi) - inner_product(s0->field, phi);
  out.convective = flux_pairing(v, 0, slab_end, gradient_at_centres(phi, v));
  if (viscosity > 0.0 && slab_end > 0) {
    const auto lap = field_at_centres(laplacian(phi), v);
    const double vol = part.cell_volume() * part.slab_duration();
    double sum = 0.0;
    for (std::size_t s = 0; s < slab_end; ++s)
      for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
        const Vec3 b = barycenter(v, s, c);
        for (int d = 0; d < part.dim; ++d) sum += b[d] * lap[c][d];
      }
    out.viscous = viscosity * sum * vol;
  }
  const ForcingOnGrid forcing(phi_op, phi.grid());
  for (std::size_t k = 0; k < forcing.rank(); ++k) out.noise += inner_product(forcing.image(k), phi) * beta_t[k];
  out.residual = std::abs(out.lhs - out.convective - out.viscous - out.noise);
  return out;
}

std::string HistoryFunctional::name() const {
  std::ostringstream s;
  switch (kind) {
    case Kind::Constant:
      return "h=1";
    case Kind::ClampedPairing:
      s << "h=clamp(1/2+<u(s),phi>/" << scale << ")";
      return s.str();
    case Kind::ClampedBeta:
      s << "h=clamp(1/2+beta" << mode + 1 << "(s)/" << scale << ")";
      return s.str();
  }
  return "h";
}

double HistoryFunctional::evaluate(double pairing_s, std::span<const double> beta_s) const {
  switch (kind) {
    case Kind::Constant:
      return 1.0;
    case Kind::ClampedPairing:
      return std::clamp(0.5 + pairing_s / scale, 0.0, 1.0);
    case Kind::ClampedBeta:
      return std::clamp(0.5 + beta_s[mode] / scale, 0.0, 1.0);
  }
  return 0.0;
}

double quadratic_variation(const ForcingOnGrid& forcing, const SpectralField& phi, double duration) {
  double sum = 0.0;
  for (std::size_t k = 0; k < forcing.rank(); ++k) {
    const double a = inner_product(forcing.image(k), phi);
    sum += a * a;
  }
  return duration * sum;
}

double cross_variation(const ForcingOnGrid& forcing, const SpectralField& phi, std::size_t mode, double duration) {
  return duration * inner_product(forcing.image(mode), phi);
}

MartingaleReport martingale_test(const std::vector<PathResult>& ensemble, const SolverConfig& cfg,
                                 const MartingaleDesign& design) {
  if (ensemble.size() < kMinMartingaleEnsemble) {
    std::ostringstream msg;
    msg << "martingale_test: ensemble of " << ensemble.size() << " paths is below the minimum of "
        << kMinMartingaleEnsemble;
    throw std::invalid_argument(msg.str());
  }
  const ForcingOnGrid forcing(cfg.forcing, cfg.grid);
  for (std::size_t k : design.modes)
    if (k >= forcing.rank()) throw std::invalid_argument("martingale_test: forcing mode out of range");
  for (const auto& h : design.histories)
    if (h.kind == HistoryFunctional::Kind::ClampedBeta && h.mode >= forcing.rank())
      throw std::invalid_argument("martingale_test: history mode out of range");

  struct Pending {
    std::string name;
    std::vector<double> samples;
  };
  std::vector<Pending> pending;
  for (std::size_t probe : design.probes) {
    if (probe >= cfg.probes.size()) throw std::invalid_argument("martingale_test: probe index out of range");
    const SpectralField& phi = cfg.probes[probe];
    for (const auto& [s, t] : design.windows) {
      for (const auto& path : ensemble)
        if (t >= path.trace.size() || s >= t || path.probes.size() <= probe)
          throw std::invalid_argument("martingale_test: window outside a trajectory");
      const double duration = ensemble.front().trace.time[t] - ensemble.front().trace.time[s];
      const double qv = quadratic_variation(forcing, phi, duration);
      std::ostringstream window;
      window << "phi" << probe << " [" << ensemble.front().trace.time[s] << "," << ensemble.front().trace.time[t]
             << "] ";
      for (const auto& h : design.histories) {
        Pending mean{window.str() + h.name() + " E[h dM]", {}};
        Pending quad{window.str() + h.name() + " E[h (dM^2 - N)]", {}};
        std::vector<Pending> cross;
        for (std::size_t k : design.modes)
          cross.push_back({window.str() + h.name() + " E[h (d(M beta" + std::to_string(k + 1) + ") - N" +
                               std::to_string(k + 1) + ")]",
                           {}});
        for (const auto& path : ensemble) {
          const auto& wf = path.probes[probe];
          const double ms = wf.martingale(s);
          const double mt = wf.martingale(t);
          const double hv = h.evaluate(wf.pairing[s], path.beta[s]);
          mean.samples.push_back(hv * (mt - ms));
          quad.samples.push_back(hv * (mt * mt - ms * ms - qv));
          for (std::size_t j = 0; j < design.modes.size(); ++j) {
            const std::size_t k = design.modes[j];
            const double cv = cross_variation(forcing, phi, k, duration);
            cross[j].samples.push_back(hv * (mt * path.beta[t][k] - ms * path.beta[s][k] - cv));
          }
        }
        pending.push_back(std::move(mean));
        pending.push_back(std::move(quad));
        for (auto& c : cross) pending.push_back(std::move(c));
      }
    }
  }

  MartingaleReport report;
  report.paths = ensemble.size();
  report.tests = pending.size();
  report.pass = true;
  if (pending.empty()) return report;
  const double alpha = 1.0 - design.confidence;
  report.z = normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(pending.size())));
  for (auto& p : pending) {
    MartingaleStatistic stat;
    stat.name = std::move(p.name);
    stat.estimate = estimate_mean(p.samples, design.confidence);
    stat.lower = stat.estimate.mean - report.z * stat.estimate.std_error;
    stat.upper = stat.estimate.mean + report.z * stat.estimate.std_error;
    stat.pass = stat.lower <= 0.0 && 0.0 <= stat.upper;
    report.pass = report.pass && stat.pass;
    report.statistics.push_back(std::move(stat));
  }
  return report;
}

EnergyLimitReport energy_inequality_limit(const GeneralizedYoungMeasure& v, const std::vector<const EnergyTrace*>& traces,
                                          double hs_norm_sq, double tolerance) {
  const auto& part = v.partition();
  if (traces.empty()) throw std::invalid_argument("energy_inequality_limit: no traces");
  EnergyLimitReport report;
  report.tolerance = tolerance;
  const std::size_t slabs = part.time_slabs;
  for (std::size_t s = 0; s < slabs; ++s) {
    report.slab_energy.push_back(energy_of(v, s));
    double i_sum = 0.0;
    double m_sum = 0.0;
    double count = 0.0;
    for (const auto* trace : traces) {
      for (std::size_t n = 0; n < trace->size(); ++n) {
        const auto slab = part.slab_of(trace->time[n]);
        if (!slab || *slab != s) continue;
        i_sum += 0.5 * hs_norm_sq * trace->time[n];
        m_sum += trace->martingale[n];
        count += 1.0;
      }
    }
    if (count == 0.0) throw std::invalid_argument("energy_inequality_limit: a slab holds no trace entries");
    report.compensated.push_back(report.slab_energy.back() - i_sum / count - m_sum / count);
  }
  // Largest rise of the compensated energy over any pair of slabs.
  std::size_t argmin = 0;
  for (std::size_t t = 1; t < slabs; ++t) {
    const double rise = report.compensated[t] - report.compensated[argmin];
    if (t == 1 || rise > report.max_defect) {
      report.max_defect = rise;
      report.argmax_s = argmin;
      report.argmax_t = t;
    }
    report.max_jump = t == 1 ? report.compensated[1] - report.compensated[0]
                             : std::max(report.max_jump, report.compensated[t] - report.compensated[t - 1]);
    if (report.compensated[t] < report.compensated[argmin]) argmin = t;
  }
  report.pass = report.max_defect <= tolerance && report.max_jump <= tolerance;
  return report;
}

}  // namespace dissipeuler
