#pragma once

// Vanishing-viscosity harness and martingale statistics.
//
// A ladder runs the same (seed, path) at a decreasing sequence of viscosities;
// every level draws bit-identical Wiener increments. Per path it records the
// dirac embedding of every level, the pooled measure of the last half of the
// ladder, and the weak* distance between successive levels (Cauchy diagnostic).

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dissipeuler/solver.hpp"
#include "dissipeuler/stats.hpp"
#include "dissipeuler/young_measure.hpp"

namespace dissipeuler {

struct ViscosityLadder {
  std::vector<double> viscosities;  // strictly decreasing, all > 0
  SolverConfig base;                // viscosity is overwritten per level
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> path_ids{0};
  Partition partition;
  BinSpec bins;

  void validate() const;
  SolverConfig level_config(std::size_t level) const;
  // First level of the tail used for the family measure.
  std::size_t tail_begin() const { return viscosities.size() / 2; }
};

struct LadderPath {
  std::uint64_t path_id = 0;
  std::vector<PathResult> levels;
  std::vector<std::string> errors;  // per level, empty when the run completed
  std::vector<GeneralizedYoungMeasure> measures;
  std::optional<GeneralizedYoungMeasure> family;
  std::vector<double> successive_distance;  // d(level i, level i + 1)
  double barycenter_error = 0.0;            // max |barycenter - cell average|
};

struct LadderResult {
  std::vector<double> viscosities;
  std::vector<LadderPath> paths;
  std::vector<double> mean_distance;  // path average of successive_distance
  bool strictly_decreasing = true;
  bool completed = true;  // no level blew up
};

// Keeps trajectories only when `keep_trajectories`; measures are always kept.
LadderResult run_ladder(const ViscosityLadder& ladder, int threads = 1, bool keep_trajectories = true);

// Cell averages of a trajectory on a partition; same layout as barycenter().
std::vector<Vec3> cell_averages(const PhysicalTrajectory& u, const Partition& partition);

// Values of f and of its gradient (entry i * dim + j holds d_j f_i) at the cell
// centres of a measure. Subsamples the physical field when the centres are grid
// points of f's grid, otherwise sums the Fourier series pointwise.
std::vector<Vec3> field_at_centres(const SpectralField& f, const GeneralizedYoungMeasure& v);
std::vector<std::array<double, 9>> gradient_at_centres(const SpectralField& f, const GeneralizedYoungMeasure& v);

// sum over slabs [slab_begin, slab_end) and cells of
// <nu, xi (x) xi> : G |cell| dt + <nu_inf, theta (x) theta> : G lambda.
double flux_pairing(const GeneralizedYoungMeasure& v, std::size_t slab_begin, std::size_t slab_end,
                    const std::vector<std::array<double, 9>>& g);

struct MomentumResidual {
  double time = 0.0;
  double lhs = 0.0;         // <u(t) - u(0), phi>
  double convective = 0.0;  // measure flux against grad phi
  double viscous = 0.0;     // eps int <barycenter, Lap phi>
  double noise = 0.0;       // sum_k <Phi e_k, phi> beta_k(t)
  double residual = 0.0;    // |lhs - convective - viscous - noise|
};

// t must be a slab boundary and `u` must hold snapshots at 0 and t. The
// viscous contribution is included in the residual and reported separately.
MomentumResidual momentum_residual(const GeneralizedYoungMeasure& v, const Trajectory& u, const ForcingOperator& phi_op,
                                   std::span<const double> beta_t, const SpectralField& phi, double t,
                                   double viscosity);

// History functionals evaluated at time s: constant 1,
// clamp(1/2 + <u(s), phi> / scale, 0, 1) and clamp(1/2 + beta_k(s) / scale, 0, 1).
struct HistoryFunctional {
  enum class Kind { Constant, ClampedPairing, ClampedBeta };
  Kind kind = Kind::Constant;
  double scale = 1.0;
  std::size_t mode = 0;

  std::string name() const;
  double evaluate(double pairing_s, std::span<const double> beta_s) const;
};

struct MartingaleDesign {
  std::vector<std::size_t> probes;  // indices into SolverConfig::probes
  std::vector<std::pair<std::size_t, std::size_t>> windows;  // (s, t) step indices
  std::vector<HistoryFunctional> histories;
  std::vector<std::size_t> modes;  // forcing modes for the cross-variation statistic
  double confidence = 0.95;
};

struct MartingaleStatistic {
  std::string name;
  Estimate estimate;
  double lower = 0.0;  // Bonferroni-adjusted interval
  double upper = 0.0;
  bool pass = false;
};

struct MartingaleReport {
  std::size_t paths = 0;
  std::size_t tests = 0;
  double z = 0.0;
  std::vector<MartingaleStatistic> statistics;
  bool pass = false;
};

inline constexpr std::size_t kMinMartingaleEnsemble = 32;

// N_{s,t} = (t - s) sum_k <Phi e_k, phi>^2 and N^k_{s,t} = (t - s) <Phi e_k, phi>.
double quadratic_variation(const ForcingOnGrid& forcing, const SpectralField& phi, double duration);
double cross_variation(const ForcingOnGrid& forcing, const SpectralField& phi, std::size_t mode, double duration);

// Statistics E[h M_{s,t}], E[h (M_t^2 - M_s^2 - N_{s,t})] and
// E[h (M_t beta_k(t) - M_s beta_k(s) - N^k_{s,t})], with M read from the
// trajectory's weak-form bookkeeping. Passes when every Bonferroni interval holds 0.
MartingaleReport martingale_test(const std::vector<PathResult>& ensemble, const SolverConfig& cfg,
                                 const MartingaleDesign& design);

struct EnergyLimitReport {
  std::vector<double> slab_energy;
  std::vector<double> compensated;  // E_slab - I_slab - M_slab
  double max_defect = 0.0;          // over all slab pairs s < t
  std::size_t argmax_s = 0;
  std::size_t argmax_t = 0;
  double max_jump = 0.0;            // largest increase of the compensated energy between neighbours
  double tolerance = 0.0;
  bool pass = false;
};

// Slab-averaged energy inequality for a measure. I and M are slab averages of
// the given traces (averaged over the traces when several are supplied).
EnergyLimitReport energy_inequality_limit(const GeneralizedYoungMeasure& v, const std::vector<const EnergyTrace*>& traces,
                                          double hs_norm_sq, double tolerance);

}  // namespace dissipeuler
