#pragma once

// Cell-discretised generalised Young measures (nu, nu_inf, lambda) on
// Q_T = [0, T) x torus.
//
// A partition splits [0, T) into equal time slabs and the torus into n_x^dim
// cubes centred on grid points. Each space-time cell carries
//   nu      a probability measure on R^dim, stored as weighted atoms; an atom is a
//           histogram bin together with the mean of the samples that fell in it,
//           so first moments are exact and nonlinear moments carry the binning error;
//   lambda  the concentration mass of the cell (a space-time measure);
//   nu_inf  a probability measure on the unit sphere, populated where lambda > 0.
//
// Estimation from a family cuts at radius R: samples with |u| <= R feed nu,
// samples with |u| > R contribute |u|^2 * (cell volume / samples) to lambda and
// their direction to nu_inf. nu is renormalised over the retained samples; a
// cell with no retained sample gets nu = delta_0 and is flagged.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dissipeuler/snapshot_io.hpp"
#include "dissipeuler/spectral.hpp"

namespace dissipeuler {

using Trajectory = std::vector<Snapshot>;

struct PhysicalSnapshot {
  double time = 0.0;
  PhysicalField field;
};
using PhysicalTrajectory = std::vector<PhysicalSnapshot>;

PhysicalTrajectory to_physical(const Trajectory& u);

struct Partition {
  int dim = 2;
  int cells_per_axis = 16;
  std::size_t time_slabs = 1;
  double horizon = 1.0;

  void validate() const;
  double slab_duration() const { return horizon / static_cast<double>(time_slabs); }
  double cell_volume() const;  // spatial volume of one cell
  std::size_t cells_per_slab() const;
  std::size_t cell_count() const { return cells_per_slab() * time_slabs; }
  // Slab holding time t, or nothing when t lies outside [0, T).
  std::optional<std::size_t> slab_of(double t) const;
  double slab_centre(std::size_t slab) const;
  double slab_start(std::size_t slab) const;
  // Centre of spatial cell c for a grid of n points per axis: with r = n / n_x
  // it sits at (j r + (r - 1) / 2) * dx, which is a grid point when r = 1.
  Vec3 cell_centre(std::size_t cell, int grid_n) const;
  Vec3 cell_centre(std::size_t cell) const { return cell_centre(cell, cells_per_axis); }
  // Spatial cell containing grid point p of a grid with n points per axis.
  std::size_t cell_of_point(std::size_t p, int grid_n) const;
};

struct BinSpec {
  double radius = 4.0;
  int bins_per_axis = 16;
  int sphere_bins = 32;  // 2D: equal arcs; 3D: 4 equal-area bands x (sphere_bins / 4)

  void validate(int dim) const;
};

struct Atom {
  std::uint32_t bin = 0;
  double weight = 0.0;
  Vec3 centroid{0.0, 0.0, 0.0};
};

struct YoungCell {
  std::vector<Atom> nu;
  double lambda = 0.0;
  std::vector<Atom> nu_inf;
  bool empty_nu = false;  // nu set to delta_0 by convention
};

struct YoungDiagnostics {
  std::size_t samples = 0;
  std::size_t clipped = 0;      // |u| > R kept in nu (embedding only), bin index clamped
  std::size_t concentrated = 0; // samples routed to lambda
  std::size_t empty_cells = 0;
  std::size_t skipped_snapshots = 0;  // outside [0, T)
};

class GeneralizedYoungMeasure {
 public:
  GeneralizedYoungMeasure(Partition partition, BinSpec bins);

  const Partition& partition() const { return partition_; }
  const BinSpec& bins() const { return bins_; }
  // Points per axis of the grid the samples came from (fixes cell centres).
  int sample_grid_n() const { return sample_grid_n_; }
  void set_sample_grid_n(int n);
  Vec3 cell_centre(std::size_t cell) const { return partition_.cell_centre(cell, sample_grid_n_); }
  const YoungDiagnostics& diagnostics() const { return diagnostics_; }
  YoungDiagnostics& diagnostics() { return diagnostics_; }

  std::size_t index(std::size_t slab, std::size_t cell) const { return slab * partition_.cells_per_slab() + cell; }
  const YoungCell& cell(std::size_t slab, std::size_t cell) const { return cells_[index(slab, cell)]; }
  YoungCell& cell(std::size_t slab, std::size_t cell) { return cells_[index(slab, cell)]; }

  // lambda mass of a slab divided by the slab duration.
  double lambda_t(std::size_t slab) const;
  double lambda_total() const;

 private:
  Partition partition_;
  BinSpec bins_;
  int sample_grid_n_;
  std::vector<YoungCell> cells_;
  YoungDiagnostics diagnostics_;
};


std::uint32_t value_bin(const Vec3& xi, int dim, const BinSpec& bins, bool* clipped = nullptr);
std::uint32_t sphere_bin(const Vec3& direction, int dim, const BinSpec& bins);

// (delta_u, 0, 0); values beyond R stay in nu (clamped bin, exact centroid) and
// are counted in diagnostics().clipped.
GeneralizedYoungMeasure dirac_embed(const Trajectory& u, const Partition& partition, const BinSpec& bins);
GeneralizedYoungMeasure dirac_embed(const PhysicalTrajectory& u, const Partition& partition, const BinSpec& bins);

// Pooled empirical measure of a family; throws on an empty family.
GeneralizedYoungMeasure estimate_from_family(const std::vector<const Trajectory*>& family,
                                             const Partition& partition, const BinSpec& bins);
GeneralizedYoungMeasure estimate_from_family(const std::vector<Trajectory>& family, const Partition& partition,
                                             const BinSpec& bins);
GeneralizedYoungMeasure estimate_from_family(const std::vector<const PhysicalTrajectory*>& family,
                                             const Partition& partition, const BinSpec& bins);

// f(t, x, xi) with |f| <= C (1 + |xi|^2) and its recession function
// f_inf(t, x, theta) = lim_{s -> inf} f(t, x, s theta) / s^2 on the unit sphere.
class TestIntegrand {
 public:
  using Fn = std::function<double(double, const Vec3&, const Vec3&)>;

  // When f_inf is omitted it is estimated as f(t, x, s theta) / s^2 at large s;
  // an integrand whose ratio does not settle is rejected.
  TestIntegrand(std::string name, int dim, Fn f, std::optional<Fn> f_inf = std::nullopt);

  const std::string& name() const { return name_; }
  double f(double t, const Vec3& x, const Vec3& xi) const { return f_(t, x, xi); }
  double f_inf(double t, const Vec3& x, const Vec3& theta) const { return f_inf_(t, x, theta); }

 private:
  std::string name_;
  int dim_;
  Fn f_;
  Fn f_inf_;
};

using Weight = std::function<double(double, const Vec3&)>;

// sum_cells phi(centre) [<nu, f> |cell| dt + <nu_inf, f_inf> lambda].
double pairing(const GeneralizedYoungMeasure& v, const TestIntegrand& f, const Weight& phi);
double pairing(const GeneralizedYoungMeasure& v, const TestIntegrand& f);
// Restricted to one slab.
double pairing_slab(const GeneralizedYoungMeasure& v, std::size_t slab, const TestIntegrand& f, const Weight& phi);

// Estimate of sup |f| / (1 + |xi|^2) over cell centres and a radial sample of xi.
double g2_norm(const TestIntegrand& f, const Partition& partition, double xi_radius = 64.0);

// First moment of nu per cell; entry [slab * cells_per_slab + cell][component].
std::vector<Vec3> barycenter(const GeneralizedYoungMeasure& v);
Vec3 barycenter(const GeneralizedYoungMeasure& v, std::size_t slab, std::size_t cell);
// 1/2 sum_x <nu, |xi|^2> |cell| + 1/2 lambda_t.
double energy_of(const GeneralizedYoungMeasure& v, std::size_t slab);
// <nu, |xi|^2> of one cell from the atom centroids.
double second_moment(const YoungCell& cell);

struct DictionaryEntry {
  TestIntegrand integrand;
  Weight weight;
  std::string name;
};
// Integrands 1, xi_i, xi_i xi_j (i <= j) times the weights 1, cos x1, sin x2,
// cos(x1 + x2), cos(2 pi t / T): 30 entries in 2D, 50 in 3D.
std::vector<DictionaryEntry> default_dictionary(int dim, double horizon);
double weakstar_distance(const GeneralizedYoungMeasure& a, const GeneralizedYoungMeasure& b,
                         const std::vector<DictionaryEntry>& dictionary);
double weakstar_distance(const GeneralizedYoungMeasure& a, const GeneralizedYoungMeasure& b);

// Total variation distance between the nu histograms of two cells (bins only).
double nu_total_variation(const YoungCell& a, const YoungCell& b);

nlohmann::json to_json(const GeneralizedYoungMeasure& v, bool include_dictionary = true);

}  // namespace dissipeuler
