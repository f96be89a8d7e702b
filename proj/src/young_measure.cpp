#include "dissipeuler/young_measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dissipeuler {

namespace {

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

int ipow(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

struct ValueAcc {
  std::uint32_t bin;
  double count;
  Vec3 sum;
};

void accumulate(std::vector<ValueAcc>& acc, std::uint32_t bin, double w, const Vec3& value) {
  for (auto& a : acc) {
    if (a.bin == bin) {
      a.count += w;
      for (int d = 0; d < 3; ++d) a.sum[d] += w * value[d];
      return;
    }
  }
  acc.push_back({bin, w, {w * value[0], w * value[1], w * value[2]}});
}

std::vector<Atom> finish_atoms(std::vector<ValueAcc>& acc, double total, bool normalise_centroid) {
  std::sort(acc.begin(), acc.end(), [](const ValueAcc& a, const ValueAcc& b) { return a.bin < b.bin; });
  std::vector<Atom> atoms;
  atoms.reserve(acc.size());
  for (const auto& a : acc) {
    Atom atom;
    atom.bin = a.bin;
    atom.weight = a.count / total;
    for (int d = 0; d < 3; ++d) atom.centroid[d] = a.sum[d] / a.count;
    if (normalise_centroid) {
      const double len = norm3(atom.centroid);
      if (len > 0.0)
        for (double& c : atom.centroid) c /= len;
    }
    atoms.push_back(atom);
  }
  return atoms;
}

GeneralizedYoungMeasure build(const std::vector<const PhysicalTrajectory*>& family, const Partition& partition,
                              const BinSpec& bins, bool embed) {
  partition.validate();
  bins.validate(partition.dim);
  if (family.empty()) throw std::invalid_argument("young measure: empty family");
  int grid_n = 0;
  for (const auto* traj : family) {
    for (const auto& snap : *traj) {
      const auto& g = snap.field.grid();
      if (g.dim() != partition.dim) throw std::invalid_argument("young measure: dimension mismatch");
      if (grid_n == 0) grid_n = g.n();
      if (g.n() != grid_n) throw std::invalid_argument("young measure: family members on different grids");
    }
  }
  if (grid_n == 0) grid_n = partition.cells_per_axis;
  if (grid_n % partition.cells_per_axis != 0)
    throw std::invalid_argument("young measure: cells per axis must divide the grid size");

  GeneralizedYoungMeasure measure(partition, bins);
  measure.set_sample_grid_n(grid_n);
  auto& diag = measure.diagnostics();

  std::vector<std::vector<const PhysicalField*>> per_slab(partition.time_slabs);
  for (const auto* traj : family) {
    for (const auto& snap : *traj) {
      if (auto slab = partition.slab_of(snap.time))
        per_slab[*slab].push_back(&snap.field);
      else
        ++diag.skipped_snapshots;
    }
  }

  const std::size_t cells = partition.cells_per_slab();
  std::vector<std::vector<std::size_t>> points(cells);
  const std::size_t npoints = static_cast<std::size_t>(ipow(grid_n, partition.dim));
  for (std::size_t p = 0; p < npoints; ++p) points[partition.cell_of_point(p, grid_n)].push_back(p);

  const int dim = partition.dim;
  const double radius = bins.radius;
  const double st_volume = partition.cell_volume() * partition.slab_duration();
  std::vector<ValueAcc> nu_acc;
  std::vector<ValueAcc> inf_acc;
  for (std::size_t s = 0; s < partition.time_slabs; ++s) {
    const auto& fields = per_slab[s];
    for (std::size_t c = 0; c < cells; ++c) {
      nu_acc.clear();
      inf_acc.clear();
      double retained = 0.0;
      double lambda_sum = 0.0;
      const double samples = static_cast<double>(fields.size() * points[c].size());
      for (const auto* field : fields) {
        for (std::size_t p : points[c]) {
          Vec3 xi{0.0, 0.0, 0.0};
          for (int d = 0; d < dim; ++d) xi[d] = field->at(d, p);
          const double len = norm3(xi);
          ++diag.samples;
          if (embed || len <= radius) {
            bool clipped = false;
            accumulate(nu_acc, value_bin(xi, dim, bins, &clipped), 1.0, xi);
            if (clipped || len > radius) ++diag.clipped;
            retained += 1.0;
          } else {
            const double mass = len * len;
            lambda_sum += mass;
            const Vec3 dir{xi[0] / len, xi[1] / len, xi[2] / len};
            accumulate(inf_acc, sphere_bin(dir, dim, bins), mass, dir);
            ++diag.concentrated;
          }
        }
      }
      auto& cell = measure.cell(s, c);
      if (retained > 0.0) {
        cell.nu = finish_atoms(nu_acc, retained, false);
      } else {
        cell.nu = {Atom{value_bin({0.0, 0.0, 0.0}, dim, bins), 1.0, {0.0, 0.0, 0.0}}};
        cell.empty_nu = true;
        ++diag.empty_cells;
      }
      if (lambda_sum > 0.0) {
        cell.lambda = lambda_sum * st_volume / samples;
        cell.nu_inf = finish_atoms(inf_acc, lambda_sum, true);
      }
    }
  }
  return measure;
}

}  // namespace

PhysicalTrajectory to_physical(const Trajectory& u) {
  PhysicalTrajectory out;
  out.reserve(u.size());
  for (const auto& snap : u) out.push_back({snap.time, to_physical(snap.field)});
  return out;
}

void Partition::validate() const {
  if (dim != 2 && dim != 3) throw std::invalid_argument("partition: dim must be 2 or 3");
  if (cells_per_axis < 1) throw std::invalid_argument("partition: cells_per_axis must be >= 1");
  if (time_slabs < 1) throw std::invalid_argument("partition: time_slabs must be >= 1");
  if (!(horizon > 0.0)) throw std::invalid_argument("partition: horizon must be > 0");
}

double Partition::cell_volume() const { return std::pow(kTwoPi / cells_per_axis, dim); }

std::size_t Partition::cells_per_slab() const { return static_cast<std::size_t>(ipow(cells_per_axis, dim)); }

std::optional<std::size_t> Partition::slab_of(double t) const {
  const double x = t / slab_duration();
  // Snapshot times are products n * dt; absorb their rounding at slab edges.
  const double snapped = std::floor(x + 1e-9);
  if (snapped < 0.0 || t < -1e-12 * horizon) return std::nullopt;
  const auto slab = static_cast<std::size_t>(snapped);
  if (slab >= time_slabs) return std::nullopt;
  return slab;
}

double Partition::slab_start(std::size_t slab) const { return static_cast<double>(slab) * slab_duration(); }

double Partition::slab_centre(std::size_t slab) const { return (static_cast<double>(slab) + 0.5) * slab_duration(); }

Vec3 Partition::cell_centre(std::size_t cell, int grid_n) const {
  const int r = grid_n / cells_per_axis;
  const double dx = kTwoPi / grid_n;
  Vec3 x{0.0, 0.0, 0.0};
  for (int d = dim - 1; d >= 0; --d) {
    const auto j = static_cast<double>(cell % static_cast<std::size_t>(cells_per_axis));
    cell /= static_cast<std::size_t>(cells_per_axis);
    x[d] = (j * r + 0.5 * (r - 1)) * dx;
  }
  return x;
}

std::size_t Partition::cell_of_point(std::size_t p, int grid_n) const {
  const int r = grid_n / cells_per_axis;
  std::size_t cell = 0;
  std::size_t stride = 1;
  for (int d = dim - 1; d >= 0; --d) {
    const std::size_t i = p % static_cast<std::size_t>(grid_n);
    p /= static_cast<std::size_t>(grid_n);
    cell += (i / static_cast<std::size_t>(r)) * stride;
    stride *= static_cast<std::size_t>(cells_per_axis);
  }
  return cell;
}

void BinSpec::validate(int dim) const {
  if (!(radius > 0.0)) throw std::invalid_argument("bins: radius must be > 0");
  if (bins_per_axis < 1) throw std::invalid_argument("bins: bins_per_axis must be >= 1");
  if (sphere_bins < 1) throw std::invalid_argument("bins: sphere_bins must be >= 1");
  if (dim == 3 && sphere_bins % 4 != 0) throw std::invalid_argument("bins: 3D sphere_bins must be a multiple of 4");
}

GeneralizedYoungMeasure::GeneralizedYoungMeasure(Partition partition, BinSpec bins)
    : partition_(partition), bins_(bins), sample_grid_n_(partition.cells_per_axis) {
  partition_.validate();
  bins_.validate(partition_.dim);
  cells_.resize(partition_.cell_count());
}

void GeneralizedYoungMeasure::set_sample_grid_n(int n) {
  if (n < partition_.cells_per_axis || n % partition_.cells_per_axis != 0)
    throw std::invalid_argument("young measure: sample grid must refine the partition");
  sample_grid_n_ = n;
}

double GeneralizedYoungMeasure::lambda_t(std::size_t slab) const {
  double mass = 0.0;
  for (std::size_t c = 0; c < partition_.cells_per_slab(); ++c) mass += cell(slab, c).lambda;
  return mass / partition_.slab_duration();
}

double GeneralizedYoungMeasure::lambda_total() const {
  double mass = 0.0;
  for (const auto& c : cells_) mass += c.lambda;
  return mass;
}

std::uint32_t value_bin(const Vec3& xi, int dim, const BinSpec& bins, bool* clipped) {
  std::uint32_t bin = 0;
  bool clip = false;
  for (int d = 0; d < dim; ++d) {
    const double scaled = (xi[d] + bins.radius) / (2.0 * bins.radius) * bins.bins_per_axis;
    auto b = static_cast<long>(std::floor(scaled));
    if (b < 0) {
      b = 0;
      clip = true;
    } else if (b >= bins.bins_per_axis) {
      if (xi[d] > bins.radius) clip = true;
      b = bins.bins_per_axis - 1;
    }
    bin = bin * static_cast<std::uint32_t>(bins.bins_per_axis) + static_cast<std::uint32_t>(b);
  }
  if (clipped) *clipped = clip;
  return bin;
}

std::uint32_t sphere_bin(const Vec3& direction, int dim, const BinSpec& bins) {
  double angle = std::atan2(direction[1], direction[0]);
  if (angle < 0.0) angle += kTwoPi;
  if (dim == 2) {
    auto b = static_cast<int>(angle / kTwoPi * bins.sphere_bins);
    return static_cast<std::uint32_t>(std::clamp(b, 0, bins.sphere_bins - 1));
  }
  const int longitudes = bins.sphere_bins / 4;
  // Equal z intervals are equal-area bands on the sphere.
  const int band = std::clamp(static_cast<int>((direction[2] + 1.0) * 2.0), 0, 3);
  const int lon = std::clamp(static_cast<int>(angle / kTwoPi * longitudes), 0, longitudes - 1);
  return static_cast<std::uint32_t>(band * longitudes + lon);
}

GeneralizedYoungMeasure dirac_embed(const PhysicalTrajectory& u, const Partition& partition, const BinSpec& bins) {
  return build({&u}, partition, bins, true);
}

GeneralizedYoungMeasure dirac_embed(const Trajectory& u, const Partition& partition, const BinSpec& bins) {
  const PhysicalTrajectory phys = to_physical(u);
  return dirac_embed(phys, partition, bins);
}

GeneralizedYoungMeasure estimate_from_family(const std::vector<const PhysicalTrajectory*>& family,
                                             const Partition& partition, const BinSpec& bins) {
  return build(family, partition, bins, false);
}

GeneralizedYoungMeasure estimate_from_family(const std::vector<const Trajectory*>& family,
                                             const Partition& partition, const BinSpec& bins) {
  std::vector<PhysicalTrajectory> phys;
  phys.reserve(family.size());
  for (const auto* t : family) phys.push_back(to_physical(*t));
  std::vector<const PhysicalTrajectory*> ptrs;
  for (const auto& t : phys) ptrs.push_back(&t);
  return build(ptrs, partition, bins, false);
}

GeneralizedYoungMeasure estimate_from_family(const std::vector<Trajectory>& family, const Partition& partition,
                                             const BinSpec& bins) {
  std::vector<const Trajectory*> ptrs;
  for (const auto& t : family) ptrs.push_back(&t);
  return estimate_from_family(ptrs, partition, bins);
}

TestIntegrand::TestIntegrand(std::string name, int dim, Fn f, std::optional<Fn> f_inf)
    : name_(std::move(name)), dim_(dim), f_(std::move(f)) {
  if (!f_) throw std::invalid_argument("integrand " + name_ + ": missing f");
  if (f_inf) {
    f_inf_ = std::move(*f_inf);
    return;
  }
  auto ratio = [g = f_](double t, const Vec3& x, const Vec3& theta, double s) {
    return g(t, x, {s * theta[0], s * theta[1], s * theta[2]}) / (s * s);
  };
  // Probe a few points and directions; the ratio must settle at large s.
  const Vec3 probes_x[] = {{0.3, 1.7, 2.9}, {4.1, 0.2, 5.5}};
  for (const auto& x : probes_x) {
    for (int j = 0; j < 8; ++j) {
      const double a = kTwoPi * j / 8.0 + 0.1;
      Vec3 theta = dim == 2 ? Vec3{std::cos(a), std::sin(a), 0.0}
                            : Vec3{std::cos(a) * 0.6, std::sin(a) * 0.6, j % 2 == 0 ? 0.8 : -0.8};
      const double r1 = ratio(0.25, x, theta, 1e4);
      const double r2 = ratio(0.25, x, theta, 1e6);
      if (!std::isfinite(r1) || !std::isfinite(r2) || std::abs(r1 - r2) > 1e-3 * (1.0 + std::abs(r2)))
        throw std::invalid_argument("integrand " + name_ + ": recession function does not exist");
    }
  }
  f_inf_ = [ratio](double t, const Vec3& x, const Vec3& theta) { return ratio(t, x, theta, 1e6); };
}

double pairing_slab(const GeneralizedYoungMeasure& v, std::size_t slab, const TestIntegrand& f, const Weight& phi) {
  const auto& part = v.partition();
  const double st_volume = part.cell_volume() * part.slab_duration();
  const double t = part.slab_centre(slab);
  double total = 0.0;
  for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
    const auto& cell = v.cell(slab, c);
    const Vec3 x = v.cell_centre(c);
    const double w = phi ? phi(t, x) : 1.0;
    if (w == 0.0) continue;
    double nu_part = 0.0;
    for (const auto& a : cell.nu) nu_part += a.weight * f.f(t, x, a.centroid);
    double inf_part = 0.0;
    if (cell.lambda > 0.0)
      for (const auto& a : cell.nu_inf) inf_part += a.weight * f.f_inf(t, x, a.centroid);
    total += w * (nu_part * st_volume + inf_part * cell.lambda);
  }
  return total;
}

double pairing(const GeneralizedYoungMeasure& v, const TestIntegrand& f, const Weight& phi) {
  double total = 0.0;
  for (std::size_t s = 0; s < v.partition().time_slabs; ++s) total += pairing_slab(v, s, f, phi);
  return total;
}

double pairing(const GeneralizedYoungMeasure& v, const TestIntegrand& f) { return pairing(v, f, Weight{}); }

double g2_norm(const TestIntegrand& f, const Partition& partition, double xi_radius) {
  double best = 0.0;
  std::vector<double> radii{0.0};
  for (double r = 0.25; r <= xi_radius; r *= 2.0) radii.push_back(r);
  std::vector<Vec3> dirs;
  for (int j = 0; j < 16; ++j) {
    const double a = kTwoPi * j / 16.0;
    if (partition.dim == 2) {
      dirs.push_back({std::cos(a), std::sin(a), 0.0});
    } else {
      for (double z : {-0.75, 0.0, 0.75}) {
        const double rho = std::sqrt(1.0 - z * z);
        dirs.push_back({rho * std::cos(a), rho * std::sin(a), z});
      }
    }
  }
  for (std::size_t s = 0; s < partition.time_slabs; ++s) {
    const double t = partition.slab_centre(s);
    for (std::size_t c = 0; c < partition.cells_per_slab(); ++c) {
      const Vec3 x = partition.cell_centre(c);
      for (double r : radii)
        for (const auto& d : dirs) {
          const Vec3 xi{r * d[0], r * d[1], r * d[2]};
          best = std::max(best, std::abs(f.f(t, x, xi)) / (1.0 + r * r));
        }
    }
  }
  return best;
}

Vec3 barycenter(const GeneralizedYoungMeasure& v, std::size_t slab, std::size_t cell) {
  Vec3 m{0.0, 0.0, 0.0};
  for (const auto& a : v.cell(slab, cell).nu)
    for (int d = 0; d < 3; ++d) m[d] += a.weight * a.centroid[d];
  return m;
}

std::vector<Vec3> barycenter(const GeneralizedYoungMeasure& v) {
  const auto& part = v.partition();
  std::vector<Vec3> out;
  out.reserve(part.cell_count());
  for (std::size_t s = 0; s < part.time_slabs; ++s)
    for (std::size_t c = 0; c < part.cells_per_slab(); ++c) out.push_back(barycenter(v, s, c));
  return out;
}

double second_moment(const YoungCell& cell) {
  double m = 0.0;
  for (const auto& a : cell.nu) {
    const double len = norm3(a.centroid);
    m += a.weight * len * len;
  }
  return m;
}

double energy_of(const GeneralizedYoungMeasure& v, std::size_t slab) {
  const auto& part = v.partition();
  if (slab >= part.time_slabs) throw std::out_of_range("energy_of: slab out of range");
  double e = 0.0;
  for (std::size_t c = 0; c < part.cells_per_slab(); ++c) e += second_moment(v.cell(slab, c));
  return 0.5 * e * part.cell_volume() + 0.5 * v.lambda_t(slab);
}

std::vector<DictionaryEntry> default_dictionary(int dim, double horizon) {
  std::vector<std::pair<std::string, TestIntegrand>> polys;
  auto zero = [](double, const Vec3&, const Vec3&) { return 0.0; };
  polys.emplace_back("1", TestIntegrand("1", dim, [](double, const Vec3&, const Vec3&) { return 1.0; }, zero));
  for (int i = 0; i < dim; ++i) {
    const std::string name = "xi" + std::to_string(i + 1);
    polys.emplace_back(name, TestIntegrand(name, dim, [i](double, const Vec3&, const Vec3& xi) { return xi[i]; }, zero));
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) {
      const std::string name = "xi" + std::to_string(i + 1) + "*xi" + std::to_string(j + 1);
      auto prod = [i, j](double, const Vec3&, const Vec3& xi) { return xi[i] * xi[j]; };
      polys.emplace_back(name, TestIntegrand(name, dim, prod, prod));
    }
  std::vector<std::pair<std::string, Weight>> weights{
      {"1", [](double, const Vec3&) { return 1.0; }},
      {"cos(x1)", [](double, const Vec3& x) { return std::cos(x[0]); }},
      {"sin(x2)", [](double, const Vec3& x) { return std::sin(x[1]); }},
      {"cos(x1+x2)", [](double, const Vec3& x) { return std::cos(x[0] + x[1]); }},
      {"cos(2pi t/T)", [horizon](double t, const Vec3&) { return std::cos(kTwoPi * t / horizon); }},
  };
  std::vector<DictionaryEntry> out;
  for (const auto& [pname, integrand] : polys)
    for (const auto& [wname, weight] : weights) out.push_back({integrand, weight, pname + " | " + wname});
  return out;
}

double weakstar_distance(const GeneralizedYoungMeasure& a, const GeneralizedYoungMeasure& b,
                         const std::vector<DictionaryEntry>& dictionary) {
  const auto& pa = a.partition();
  const auto& pb = b.partition();
  if (pa.dim != pb.dim || pa.cells_per_axis != pb.cells_per_axis || pa.time_slabs != pb.time_slabs ||
      pa.horizon != pb.horizon)
    throw std::invalid_argument("weakstar_distance: measures on different partitions");
  double best = 0.0;
  for (const auto& entry : dictionary)
    best = std::max(best, std::abs(pairing(a, entry.integrand, entry.weight) - pairing(b, entry.integrand, entry.weight)));
  return best;
}

double weakstar_distance(const GeneralizedYoungMeasure& a, const GeneralizedYoungMeasure& b) {
  return weakstar_distance(a, b, default_dictionary(a.partition().dim, a.partition().horizon));
}

double nu_total_variation(const YoungCell& a, const YoungCell& b) {
  double tv = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.nu.size() || j < b.nu.size()) {
    if (j >= b.nu.size() || (i < a.nu.size() && a.nu[i].bin < b.nu[j].bin)) {
      tv += a.nu[i++].weight;
    } else if (i >= a.nu.size() || b.nu[j].bin < a.nu[i].bin) {
      tv += b.nu[j++].weight;
    } else {
      tv += std::abs(a.nu[i++].weight - b.nu[j++].weight);
    }
  }
  return 0.5 * tv;
}

nlohmann::json to_json(const GeneralizedYoungMeasure& v, bool include_dictionary) {
  using nlohmann::json;
  const auto& part = v.partition();
  const auto& d = v.diagnostics();
  json out;
  out["partition"] = {{"dim", part.dim},
                      {"cells_per_axis", part.cells_per_axis},
                      {"time_slabs", part.time_slabs},
                      {"horizon", part.horizon},
                      {"sample_grid_n", v.sample_grid_n()}};
  out["bins"] = {{"radius", v.bins().radius},
                 {"bins_per_axis", v.bins().bins_per_axis},
                 {"sphere_bins", v.bins().sphere_bins}};
  out["diagnostics"] = {{"samples", d.samples},
                        {"clipped", d.clipped},
                        {"concentrated", d.concentrated},
                        {"empty_cells", d.empty_cells},
                        {"skipped_snapshots", d.skipped_snapshots}};
  auto atoms_json = [&](const std::vector<Atom>& atoms) {
    json arr = json::array();
    for (const auto& a : atoms) {
      json c = json::array();
      for (int k = 0; k < part.dim; ++k) c.push_back(a.centroid[k]);
      arr.push_back({{"bin", a.bin}, {"weight", a.weight}, {"centroid", c}});
    }
    return arr;
  };
  json slabs = json::array();
  for (std::size_t s = 0; s < part.time_slabs; ++s) {
    json cells = json::array();
    for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
      const auto& cell = v.cell(s, c);
      json jc = {{"nu", atoms_json(cell.nu)}, {"lambda", cell.lambda}};
      if (cell.lambda > 0.0) jc["nu_inf"] = atoms_json(cell.nu_inf);
      if (cell.empty_nu) jc["empty_nu"] = true;
      cells.push_back(std::move(jc));
    }
    slabs.push_back({{"slab", s}, {"lambda_t", v.lambda_t(s)}, {"energy", energy_of(v, s)}, {"cells", cells}});
  }
  out["slabs"] = std::move(slabs);
  if (include_dictionary) {
    json names = json::array();
    for (const auto& e : default_dictionary(part.dim, part.horizon)) names.push_back(e.name);
    out["dictionary"] = names;
  }
  return out;
}

}  // namespace dissipeuler
