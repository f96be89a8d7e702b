#pragma once

// Projected stochastic Navier-Stokes on the torus:
//   du = eps Lap u dt - P div(u (x) u) dt + Phi dW,   div u = 0.
//
// One step is u_{n+1} = exp(eps Lap dt) [u_n + dt C(u_n) + Phi dW_n]: an exact
// integrating factor for the Stokes part and explicit Euler-Maruyama for transport
// and noise. The energy budget of each step is recorded term by term.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dissipeuler/forcing.hpp"
#include "dissipeuler/snapshot_io.hpp"
#include "dissipeuler/spectral.hpp"
#include "dissipeuler/stats.hpp"

namespace dissipeuler {

struct TrigMode {
  Wavevector k{0, 0, 0};
  Vec3 direction{0.0, 0.0, 0.0};
  double amplitude = 0.0;
  ModePhase phase = ModePhase::Cos;
};

// Law of the initial datum.
struct InitialLaw {
  enum class Kind { Zero, Shear, TaylorGreen, Modes, RandomPhase };
  Kind kind = Kind::Zero;
  double amplitude = 1.0;       // Shear, TaylorGreen
  std::vector<TrigMode> modes;  // Modes
  // RandomPhase: energy spectrum ~ k^4 exp(-2 (k/k_peak)^2) on 1 <= |k| <= k_max,
  // random Gaussian amplitudes and phases, total energy rescaled to `energy`.
  double energy = 0.5;
  double k_peak = 2.0;
  int k_max = 4;
};

// Divergence-free, dealiased initial field; RandomPhase draws are keyed by
// (seed, path_id, wavevector) so every grid resolving k_max sees the same field.
SpectralField sample_initial(const InitialLaw& law, const TorusGrid& grid, RngKey key);

struct SolverConfig {
  double viscosity = 0.0;
  double dt = 0.01;
  double horizon = 1.0;
  TorusGrid grid{2, 32};
  ForcingOperator forcing = ForcingOperator::none(2);
  InitialLaw initial;
  // The Wiener lattice has base step dt * 2^refinement; level `refinement`
  // increments are Brownian-bridge subdivisions of the base path.
  int refinement = 0;
  double cfl = 0.5;
  int max_cfl_refinement = 10;
  double blowup_ceiling = 1e3;
  bool transport = true;
  // Keep a snapshot every `snapshot_every` nominal steps (0: only t = 0).
  std::size_t snapshot_every = 0;
  // Divergence-free test fields whose weak-form bookkeeping is recorded.
  std::vector<SpectralField> probes;

  std::size_t steps() const;
  double dt_base() const;
  void validate() const;
};

// Per nominal step n (time n*dt): E_n, cumulative D_n = eps int |grad u|^2,
// I_n = 1/2 ||Phi||^2 t_n and the Ito sum M_n = sum sum_k <u, Phi e_k> dW_k.
struct EnergyTrace {
  double dt = 0.0;
  std::vector<double> time;
  std::vector<double> energy;
  std::vector<double> dissipation;
  std::vector<double> ito_correction;
  std::vector<double> martingale;

  std::size_t size() const { return time.size(); }
  // E + D - I - M; its increments are the energy defects.
  double potential(std::size_t n) const;
};

// defect(s, t) = E_t + (D_t - D_s) - E_s - (I_t - I_s) - (M_t - M_s).
double energy_audit(const EnergyTrace& trace, std::size_t s, std::size_t t);

struct DefectExtreme {
  double defect = 0.0;
  std::size_t s = 0;
  std::size_t t = 0;
};
// Largest defect over all grid pairs s < t (a running-minimum sweep).
DefectExtreme max_defect(const EnergyTrace& trace);

// C * sqrt(dt) * (1 + E_0)
double energy_tolerance(double constant, double dt, double initial_energy);

// Weak-form bookkeeping for a test field phi at nominal steps:
// pairing_n = <u_n, phi>, convective_n = sum h <C(u), phi>,
// viscous_n = sum <u_{j+1} - exp(-eps Lap h) u_{j+1}, phi> (eps int <u, Lap phi>
// along the exact Stokes flow of each step).
struct WeakFormTrace {
  std::vector<double> pairing;
  std::vector<double> convective;
  std::vector<double> viscous;

  // M_n = <u_n - u_0, phi> - eps int <u, Lap phi> - int <u (x) u, grad phi>.
  double martingale(std::size_t n) const;
};

struct PathResult {
  EnergyTrace trace;
  std::vector<Snapshot> snapshots;
  std::vector<WeakFormTrace> probes;
  // beta_k(t_n) for every nominal step n.
  std::vector<std::vector<double>> beta;
  std::size_t substepped_steps = 0;
};

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, double time, double max_velocity, std::shared_ptr<PathResult> partial);
  double time() const { return time_; }
  double max_velocity() const { return max_velocity_; }
  const std::shared_ptr<PathResult>& partial() const { return partial_; }

 private:
  double time_;
  double max_velocity_;
  std::shared_ptr<PathResult> partial_;
};

// Energy budget of one step.
struct StepBudget {
  double dissipated = 0.0;   // energy removed by the integrating factor
  double martingale = 0.0;   // sum_k <u_n, Phi e_k> dW_k
  double max_velocity = 0.0; // max_x |u_n(x)|
  // Per probe: h <C(u_n), phi> and <u_{n+1} - exp(-eps Lap h) u_{n+1}, phi>.
  std::vector<double> probe_convective;
  std::vector<double> probe_viscous;
};

class Stepper {
 public:
  explicit Stepper(const SolverConfig& cfg);

  // One step of size h with per-mode increments; returns u_{n+1}.
  SpectralField advance(const SpectralField& u, std::span<const double> increments, double h,
                        StepBudget& budget) const;
  // Viscous factor exp(-eps |k|^2 h) applied to a field.
  SpectralField integrating_factor(const SpectralField& u, double h, bool inverse = false) const;
  const ForcingOnGrid& forcing() const { return forcing_; }

 private:
  double viscosity_;
  bool transport_;
  double blowup_ceiling_;
  std::vector<SpectralField> probes_;
  ForcingOnGrid forcing_;
};

// Single step with a fixed step size (no CFL subdivision).
SpectralField step(const SpectralField& u, std::span<const double> increments, const SolverConfig& cfg);

// Full trajectory on the noise path (seed, path_id). Steps violating the CFL
// guard dt <= cfl * dx / max|u| are subdivided dyadically with bridge-refined
// increments of the same path.
PathResult run_path(const SolverConfig& cfg, std::uint64_t seed, std::uint64_t path_id);

struct AprioriLevel {
  double viscosity = 0.0;
  Estimate moment;
};

struct AprioriReport {
  double p = 0.0;
  std::vector<AprioriLevel> levels;
  bool uniform = true;
};

// True when `cur` exceeds `prev` beyond the combined 95% CIs plus a relative
// round-off allowance (single deterministic paths have zero-width CIs).
bool apriori_exceeds(const Estimate& prev, const Estimate& cur);

// Monte Carlo estimate of E[sup_t (E_t + D_t)]^p per viscosity level; `uniform`
// holds when no level exceeds its predecessor (apriori_exceeds).
AprioriReport apriori_monitor(const std::vector<std::vector<EnergyTrace>>& traces_per_level,
                              std::span<const double> viscosities, double p);

// <u, phi> in W^{-3,2}: sum_k (1 + |k|^2)^{-3} uhat(k) . conj(phihat(k)).
double negative_sobolev_pairing(const SpectralField& u, const SpectralField& phi);
// sup_{s != t} |f(t) - f(s)| / |t - s|^alpha for f(t) = <u(t), phi>_{-3}.
double holder_seminorm(const std::vector<Snapshot>& trajectory, const SpectralField& phi, double alpha);

}  // namespace dissipeuler
