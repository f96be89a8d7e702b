#include "dissipeuler/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dissipeuler {

namespace {

std::uint64_t encode_wavevector(const Wavevector& k) {
  return (static_cast<std::uint64_t>(k[0] + 512) * 1024 + static_cast<std::uint64_t>(k[1] + 512)) * 1024 +
         static_cast<std::uint64_t>(k[2] + 512);
}

void set_complex_mode(SpectralField& f, const Wavevector& k, const std::array<Complex, 3>& coeff) {
  const auto& grid = f.grid();
  const Wavevector minus{-k[0], -k[1], -k[2]};
  if (auto idx = grid.index_of(k))
    for (int c = 0; c < grid.dim(); ++c) f.at(c, *idx) += coeff[c];
  if (auto idx = grid.index_of(minus))
    for (int c = 0; c < grid.dim(); ++c) f.at(c, *idx) += std::conj(coeff[c]);
}

// First non-zero component positive: one representative of each +-k pair.
bool canonical(const Wavevector& k) {
  for (int v : k) {
    if (v > 0) return true;
    if (v < 0) return false;
  }
  return false;
}

SpectralField random_phase_field(const InitialLaw& law, const TorusGrid& grid, RngKey key) {
  const int dim = grid.dim();
  if (law.k_max < 1) throw std::invalid_argument("initial: k_max must be >= 1");
  if (law.k_max > grid.dealias_cutoff())
    throw std::invalid_argument("initial: k_max exceeds the grid's dealiasing cutoff");
  if (!(law.energy >= 0.0)) throw std::invalid_argument("initial: energy must be >= 0");
  SpectralField f(grid);
  const int km = law.k_max;
  const int kz_range = dim == 3 ? km : 0;
  for (int a = -km; a <= km; ++a) {
    for (int b = -km; b <= km; ++b) {
      for (int c = -kz_range; c <= kz_range; ++c) {
        const Wavevector k{a, b, c};
        const double kk = std::sqrt(static_cast<double>(a * a + b * b + c * c));
        if (!canonical(k) || kk > km) continue;
        const std::uint64_t index = encode_wavevector(k);
        std::array<Complex, 3> v{};
        for (int d = 0; d < dim; ++d)
          v[d] = Complex(keyed_normal(key, index, static_cast<std::uint32_t>(2 * d), stream::kInitial),
                         keyed_normal(key, index, static_cast<std::uint32_t>(2 * d + 1), stream::kInitial));
        Complex kdotv = 0.0;
        for (int d = 0; d < dim; ++d) kdotv += static_cast<double>(k[d]) * v[d];
        for (int d = 0; d < dim; ++d) v[d] -= static_cast<double>(k[d]) * kdotv / (kk * kk);
        const double shell = std::pow(kk, 4) * std::exp(-2.0 * (kk / law.k_peak) * (kk / law.k_peak));
        const double scale = std::sqrt(shell / std::pow(kk, dim - 1));
        for (int d = 0; d < dim; ++d) v[d] *= scale;
        set_complex_mode(f, k, v);
      }
    }
  }
  const double e = 0.5 * l2_norm_sq(f);
  if (e > 0.0) f *= std::sqrt(law.energy / e);
  return f;
}

PhysicalField taylor_green(const TorusGrid& grid, double amplitude) {
  PhysicalField u(grid);
  for (std::size_t p = 0; p < grid.physical_size(); ++p) {
    const Vec3 x = grid.point(p);
    const double cz = grid.dim() == 3 ? std::cos(x[2]) : 1.0;
    u.at(0, p) = amplitude * std::sin(x[0]) * std::cos(x[1]) * cz;
    u.at(1, p) = -amplitude * std::cos(x[0]) * std::sin(x[1]) * cz;
  }
  return u;
}

double weighted_pairing(const SpectralField& u, const SpectralField& phi, double viscosity, double h) {
  // sum_k (1 - exp(eps |k|^2 h)) uhat . conj(phihat), i.e. <u - exp(-eps Lap h) u, phi>.
  const auto& grid = u.grid();
  double sum = 0.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    const double factor = -std::expm1(viscosity * k2 * h);
    if (factor == 0.0) continue;
    double s = 0.0;
    for (int c = 0; c < grid.dim(); ++c) {
      const Complex a = u.at(c, idx);
      const Complex b = phi.at(c, idx);
      s += a.real() * b.real() + a.imag() * b.imag();
    }
    sum += grid.mode_weight(idx) * factor * s;
  }
  return grid.volume() * sum;
}

}  // namespace

SpectralField sample_initial(const InitialLaw& law, const TorusGrid& grid, RngKey key) {
  SpectralField f(grid);
  switch (law.kind) {
    case InitialLaw::Kind::Zero:
      break;
    case InitialLaw::Kind::Shear:
      add_real_mode(f, {0, 1, 0}, {1.0, 0.0, 0.0}, law.amplitude, ModePhase::Sin);
      break;
    case InitialLaw::Kind::TaylorGreen:
      f = to_spectral(taylor_green(grid, law.amplitude));
      break;
    case InitialLaw::Kind::Modes:
      for (const auto& m : law.modes) {
        double kdot = 0.0;
        for (int d = 0; d < grid.dim(); ++d) kdot += m.k[d] * m.direction[d];
        if (std::abs(kdot) > 1e-12) throw std::invalid_argument("initial: mode direction must be orthogonal to k");
        add_real_mode(f, m.k, m.direction, m.amplitude, m.phase);
      }
      break;
    case InitialLaw::Kind::RandomPhase:
      f = random_phase_field(law, grid, key);
      break;
  }
  return leray_project(dealias(f));
}

std::size_t SolverConfig::steps() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

double SolverConfig::dt_base() const { return std::ldexp(dt, refinement); }

void SolverConfig::validate() const {
  if (!(viscosity >= 0.0)) throw std::invalid_argument("solver: viscosity must be >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("solver: dt must be > 0");
  if (!(horizon >= 0.0)) throw std::invalid_argument("solver: horizon must be >= 0");
  if (std::abs(static_cast<double>(steps()) * dt - horizon) > 1e-9 * std::max(1.0, horizon))
    throw std::invalid_argument("solver: horizon must be an integer multiple of dt");
  if (refinement < 0 || refinement > 30) throw std::invalid_argument("solver: refinement out of range");
  if (!(cfl > 0.0)) throw std::invalid_argument("solver: cfl must be > 0");
  if (!(blowup_ceiling > 0.0)) throw std::invalid_argument("solver: blow-up ceiling must be > 0");
  if (forcing.dim() != grid.dim()) throw std::invalid_argument("solver: forcing dimension does not match grid");
  for (const auto& p : probes)
    if (!(p.grid() == grid)) throw std::invalid_argument("solver: probe field on a different grid");
}

double EnergyTrace::potential(std::size_t n) const {
  return energy[n] + dissipation[n] - ito_correction[n] - martingale[n];
}

double energy_audit(const EnergyTrace& trace, std::size_t s, std::size_t t) {
  if (s >= trace.size() || t >= trace.size() || s > t) throw std::out_of_range("energy_audit: s, t outside trace");
  return (trace.energy[t] - trace.energy[s]) + (trace.dissipation[t] - trace.dissipation[s]) -
         (trace.ito_correction[t] - trace.ito_correction[s]) - (trace.martingale[t] - trace.martingale[s]);
}

DefectExtreme max_defect(const EnergyTrace& trace) {
  DefectExtreme best{-std::numeric_limits<double>::infinity(), 0, 0};
  if (trace.size() < 2) return {0.0, 0, 0};
  std::size_t argmin = 0;
  for (std::size_t t = 1; t < trace.size(); ++t) {
    const double d = energy_audit(trace, argmin, t);
    if (d > best.defect) best = {d, argmin, t};
    if (trace.potential(t) < trace.potential(argmin)) argmin = t;
  }
  return best;
}

double energy_tolerance(double constant, double dt, double initial_energy) {
  return constant * std::sqrt(dt) * (1.0 + initial_energy);
}

double WeakFormTrace::martingale(std::size_t n) const {
  return pairing[n] - pairing[0] - viscous[n] - convective[n];
}

BlowUpError::BlowUpError(const std::string& what, double time, double max_velocity,
                         std::shared_ptr<PathResult> partial)
    : std::runtime_error(what), time_(time), max_velocity_(max_velocity), partial_(std::move(partial)) {}

Stepper::Stepper(const SolverConfig& cfg)
    : viscosity_(cfg.viscosity), transport_(cfg.transport), blowup_ceiling_(cfg.blowup_ceiling),
      probes_(cfg.probes), forcing_(cfg.forcing, cfg.grid) {}

SpectralField Stepper::integrating_factor(const SpectralField& u, double h, bool inverse) const {
  SpectralField out = u;
  if (viscosity_ == 0.0) return out;
  const auto& grid = u.grid();
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if (k2 == 0.0) continue;
    const double f = std::exp(sign * viscosity_ * k2 * h);
    for (int c = 0; c < grid.dim(); ++c) out.at(c, idx) *= f;
  }
  return out;
}

SpectralField Stepper::advance(const SpectralField& u, std::span<const double> increments, double h,
                               StepBudget& budget) const {
  const auto& grid = u.grid();
  SpectralField drift(grid);
  double max_velocity = 0.0;
  if (transport_) {
    drift = convective_term(u, max_velocity);
  } else {
    max_velocity = to_physical(u).max_norm();
  }
  budget.max_velocity = max_velocity;
  if (!std::isfinite(max_velocity) || max_velocity > blowup_ceiling_) {
    std::ostringstream msg;
    msg << "velocity " << max_velocity << " exceeds ceiling " << blowup_ceiling_;
    throw BlowUpError(msg.str(), 0.0, max_velocity, nullptr);
  }

  std::vector<double> projections(forcing_.rank());
  forcing_.project(u, projections);
  budget.martingale = 0.0;
  for (std::size_t k = 0; k < projections.size(); ++k) budget.martingale += projections[k] * increments[k];

  SpectralField w = u;
  if (transport_) w.axpy(h, drift);
  forcing_.add_noise(w, increments);

  // Exact energy removed by exp(eps Lap h): 1/2 sum |w_k|^2 (1 - exp(-2 eps |k|^2 h)).
  SpectralField next = w;
  double removed = 0.0;
  if (viscosity_ > 0.0) {
    for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
      const Vec3 k = grid.derivative_wavevector(idx);
      const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
      if (k2 == 0.0) continue;
      const double a = viscosity_ * k2 * h;
      const double f = std::exp(-a);
      double e = 0.0;
      for (int c = 0; c < grid.dim(); ++c) {
        e += std::norm(w.at(c, idx));
        next.at(c, idx) *= f;
      }
      removed += grid.mode_weight(idx) * e * (-std::expm1(-2.0 * a));
    }
  }
  budget.dissipated = 0.5 * grid.volume() * removed;

  budget.probe_convective.assign(probes_.size(), 0.0);
  budget.probe_viscous.assign(probes_.size(), 0.0);
  for (std::size_t p = 0; p < probes_.size(); ++p) {
    if (transport_) budget.probe_convective[p] = h * inner_product(drift, probes_[p]);
    budget.probe_viscous[p] = weighted_pairing(next, probes_[p], viscosity_, h);
  }
  return next;
}

SpectralField step(const SpectralField& u, std::span<const double> increments, const SolverConfig& cfg) {
  Stepper stepper(cfg);
  StepBudget budget;
  return stepper.advance(u, increments, cfg.dt, budget);
}

PathResult run_path(const SolverConfig& cfg, std::uint64_t seed, std::uint64_t path_id) {
  cfg.validate();
  const auto& grid = cfg.grid;
  const RngKey key{seed, path_id};
  const Stepper stepper(cfg);
  const std::size_t modes = cfg.forcing.rank();
  const std::size_t steps = cfg.steps();
  const double dt = cfg.dt;
  const double dt_base = cfg.dt_base();
  const double hs = hs_norm_sq(cfg.forcing);

  auto result = std::make_shared<PathResult>();
  auto& trace = result->trace;
  trace.dt = dt;
  SpectralField u = sample_initial(cfg.initial, grid, key);

  auto record = [&](std::size_t n, double d, double m) {
    trace.time.push_back(static_cast<double>(n) * dt);
    trace.energy.push_back(0.5 * l2_norm_sq(u));
    trace.dissipation.push_back(d);
    trace.ito_correction.push_back(0.5 * hs * static_cast<double>(n) * dt);
    trace.martingale.push_back(m);
  };
  record(0, 0.0, 0.0);
  result->beta.push_back(std::vector<double>(modes, 0.0));
  result->probes.resize(cfg.probes.size());
  for (std::size_t p = 0; p < cfg.probes.size(); ++p) {
    result->probes[p].pairing.push_back(inner_product(u, cfg.probes[p]));
    result->probes[p].convective.push_back(0.0);
    result->probes[p].viscous.push_back(0.0);
  }
  result->snapshots.push_back({0.0, u});

  double dissipation = 0.0;
  double martingale = 0.0;
  std::vector<double> increments(modes);
  std::vector<double> conv(cfg.probes.size(), 0.0);
  std::vector<double> visc(cfg.probes.size(), 0.0);
  const double dx = grid.spacing();

  for (std::size_t n = 0; n < steps; ++n) {
    try {
      // CFL guard on the current state; subdivide dyadically when violated.
      const double umax = to_physical(u).max_norm();
      if (!std::isfinite(umax) || umax > cfg.blowup_ceiling) {
        std::ostringstream msg;
        msg << "blow-up at t=" << static_cast<double>(n) * dt << ": max|u| = " << umax;
        throw BlowUpError(msg.str(), static_cast<double>(n) * dt, umax, nullptr);
      }
      int sub_level = 0;
      if (cfg.transport && umax > 0.0) {
        while (std::ldexp(dt, -sub_level) > cfg.cfl * dx / umax) {
          if (++sub_level > cfg.max_cfl_refinement) {
            std::ostringstream msg;
            msg << "CFL subdivision limit reached at t=" << static_cast<double>(n) * dt << ": max|u| = " << umax;
            throw BlowUpError(msg.str(), static_cast<double>(n) * dt, umax, nullptr);
          }
        }
      }
      if (sub_level > 0) ++result->substepped_steps;
      const std::uint64_t substeps = std::uint64_t{1} << sub_level;
      const double h = std::ldexp(dt, -sub_level);
      std::vector<double> beta = result->beta.back();
      for (std::uint64_t j = 0; j < substeps; ++j) {
        const std::uint64_t index = static_cast<std::uint64_t>(n) * substeps + j;
        for (std::size_t k = 0; k < modes; ++k) {
          increments[k] = wiener_increment(key, static_cast<std::uint32_t>(k), index, cfg.refinement + sub_level, dt_base);
          beta[k] += increments[k];
        }
        StepBudget budget;
        u = stepper.advance(u, increments, h, budget);
        dissipation += budget.dissipated;
        martingale += budget.martingale;
        for (std::size_t p = 0; p < conv.size(); ++p) {
          conv[p] += budget.probe_convective[p];
          visc[p] += budget.probe_viscous[p];
        }
      }
      record(n + 1, dissipation, martingale);
      result->beta.push_back(std::move(beta));
      for (std::size_t p = 0; p < cfg.probes.size(); ++p) {
        result->probes[p].pairing.push_back(inner_product(u, cfg.probes[p]));
        result->probes[p].convective.push_back(conv[p]);
        result->probes[p].viscous.push_back(visc[p]);
      }
      if (cfg.snapshot_every > 0 && (n + 1) % cfg.snapshot_every == 0)
        result->snapshots.push_back({static_cast<double>(n + 1) * dt, u});
    } catch (const BlowUpError& e) {
      throw BlowUpError(e.what(), static_cast<double>(n) * dt, e.max_velocity(), result);
    }
  }
  return std::move(*result);
}

bool apriori_exceeds(const Estimate& prev, const Estimate& cur) {
  const double roundoff = 1e-9 * std::max(std::abs(prev.mean), std::abs(cur.mean));
  return cur.mean - prev.mean > cur.half_width + prev.half_width + roundoff;
}

AprioriReport apriori_monitor(const std::vector<std::vector<EnergyTrace>>& traces_per_level,
                              std::span<const double> viscosities, double p) {
  if (!(p > 2.0)) throw std::invalid_argument("apriori_monitor: p must exceed 2");
  if (traces_per_level.size() != viscosities.size() || traces_per_level.empty())
    throw std::invalid_argument("apriori_monitor: one trace ensemble per viscosity level required");
  AprioriReport report;
  report.p = p;
  for (std::size_t level = 0; level < traces_per_level.size(); ++level) {
    const auto& ensemble = traces_per_level[level];
    if (ensemble.empty()) throw std::invalid_argument("apriori_monitor: empty ensemble");
    std::vector<double> samples;
    for (const auto& trace : ensemble) {
      double sup = 0.0;
      for (std::size_t n = 0; n < trace.size(); ++n) sup = std::max(sup, trace.energy[n] + trace.dissipation[n]);
      samples.push_back(std::pow(sup, p));
    }
    report.levels.push_back({viscosities[level], estimate_mean(samples)});
  }
  for (std::size_t i = 1; i < report.levels.size(); ++i) {
    const auto& prev = report.levels[i - 1].moment;
    const auto& cur = report.levels[i].moment;
    if (apriori_exceeds(prev, cur)) report.uniform = false;
  }
  return report;
}

double negative_sobolev_pairing(const SpectralField& u, const SpectralField& phi) {
  const auto& grid = u.grid();
  double sum = 0.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    const double w = std::pow(1.0 + k[0] * k[0] + k[1] * k[1] + k[2] * k[2], -3.0);
    double s = 0.0;
    for (int c = 0; c < grid.dim(); ++c) {
      const Complex a = u.at(c, idx);
      const Complex b = phi.at(c, idx);
      s += a.real() * b.real() + a.imag() * b.imag();
    }
    sum += grid.mode_weight(idx) * w * s;
  }
  return grid.volume() * sum;
}

double holder_seminorm(const std::vector<Snapshot>& trajectory, const SpectralField& phi, double alpha) {
  std::vector<double> values;
  values.reserve(trajectory.size());
  for (const auto& snap : trajectory) values.push_back(negative_sobolev_pairing(snap.field, phi));
  double best = 0.0;
  for (std::size_t i = 0; i < trajectory.size(); ++i)
    for (std::size_t j = i + 1; j < trajectory.size(); ++j) {
      const double gap = std::abs(trajectory[j].time - trajectory[i].time);
      if (gap > 0.0) best = std::max(best, std::abs(values[j] - values[i]) / std::pow(gap, alpha));
    }
  return best;
}

}  // namespace dissipeuler
