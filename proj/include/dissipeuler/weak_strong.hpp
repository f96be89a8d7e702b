#pragma once

// Pathwise weak-strong audit. The strong reference v is a resolved inviscid run
// (finer grid, smaller step) on the same Wiener path and the same initial datum
// as the weak candidate; its horizon is the first snapshot time at which the
// tail-energy diagnostic exceeds a threshold.
//
// Relative energy of a measure V against v on a slab:
//   F = 1/2 sum_x <nu, |xi - v|^2> |cell| + 1/2 lambda_t
//     = E_slab + 1/2 ||v||^2 - <barycenter, v>.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dissipeuler/limit.hpp"
#include "dissipeuler/solver.hpp"
#include "dissipeuler/stats.hpp"
#include "dissipeuler/young_measure.hpp"

namespace dissipeuler {

struct StrongReferenceOptions {
  int n = 128;
  int dt_refinement = 2;  // reference step dt / 2^dt_refinement
  double tail_threshold = 1e-6;
};

struct StrongReference {
  Trajectory v;  // snapshots at the weak candidate's snapshot times
  std::vector<double> gradient_sup;    // sup_x sum_ij |d_j v_i|
  std::vector<double> gradient_l2_sq;  // int |grad v|^2
  std::vector<double> tail_fraction;
  double horizon = 0.0;  // first snapshot time with tail_fraction above threshold, else T
  double energy_equality_residual = 0.0;  // max_t |E_t - E_0 - I_t - M_t| over [0, horizon]
  std::string error;     // blow-up message when the reference run was cut short
};

// Configuration of the reference run derived from a weak candidate's config.
SolverConfig reference_config(const SolverConfig& weak, const StrongReferenceOptions& options);
StrongReference strong_reference(const SolverConfig& weak, std::uint64_t seed, std::uint64_t path_id,
                                 const StrongReferenceOptions& options = {});

struct RelativeEnergy {
  double measure_form = 0.0;
  double expanded_form = 0.0;
};

// v is evaluated at the cell centres of V.
RelativeEnergy relative_energy(const GeneralizedYoungMeasure& v_measure, const SpectralField& v, std::size_t slab);

// First snapshot time t_j < horizon with gradient_sup > L, else the horizon.
double stopping_time(const StrongReference& ref, double L);
double stopping_time(std::span<const double> times, std::span<const double> gradient_sup, double horizon, double L);

struct CrossTermCheck {
  double a_convective = 0.0;  // int <nu, xi (x) xi> : grad v (with the lambda part)
  double a_transport = 0.0;   // -int div(v (x) v) . barycenter
  double rhs = 0.0;           // int <nu, (xi - v) (x) (xi - v)> : grad v (with the lambda part)
  double residual = 0.0;      // |a_convective + a_transport - rhs|
};

// Over slabs [slab_begin, slab_end); `v` must hold a snapshot at each slab start.
CrossTermCheck crossterm_identity_check(const GeneralizedYoungMeasure& measure, const Trajectory& v,
                                        std::size_t slab_begin, std::size_t slab_end);

// Per-path comparison of one weak candidate against its reference.
struct WeakStrongPath {
  std::uint64_t path_id = 0;
  std::vector<double> times;
  std::vector<double> f_measure;
  std::vector<double> f_expanded;
  std::vector<double> gradient_sup;
  std::vector<double> slack;  // discretisation budget at each time
  double horizon = 0.0;
};

// Slack budget at t: eps/4 int_0^t ||grad v||^2 (viscous part of the weak
// candidate) + 1/2 ||v(t) - P v(t)||^2 (modes of v outside the candidate's
// dealiased band) + the positive part of the candidate's energy defect on [0, t]
// + the reference's energy-equality residual.
std::vector<double> weak_strong_slack(const StrongReference& ref, const EnergyTrace& weak_trace,
                                      const TorusGrid& weak_grid, double viscosity, std::span<const double> times);

WeakStrongPath compare_paths(const GeneralizedYoungMeasure& weak_measure, const StrongReference& ref,
                             const EnergyTrace& weak_trace, const TorusGrid& weak_grid, double viscosity,
                             std::uint64_t path_id);

struct GronwallReport {
  double L = 0.0;
  std::vector<double> times;
  std::vector<Estimate> stopped;   // E[F(t ^ tau_L)]
  std::vector<double> envelope;    // (E[F(0)] + E[slack(t)]) exp(L t)
  double min_margin = 0.0;         // min_t envelope - mean
  Estimate sup_stopped;            // the time with the largest mean, with its CI
  bool pass = false;
};

// Paths must share their time grid.
GronwallReport gronwall_audit(const std::vector<WeakStrongPath>& paths, double L);

struct TschebyscheffCheck {
  double L = 0.0;
  Estimate probability;  // P[tau_L < horizon]
  Estimate mean_sup;     // E[sup_{t < horizon} ||grad v||]
  double bound = 0.0;    // mean_sup / L
  bool pass = false;     // probability within MC error of the bound
};

TschebyscheffCheck tschebyscheff_check(const std::vector<WeakStrongPath>& paths, double L);

}  // namespace dissipeuler
