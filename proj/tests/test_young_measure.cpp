#include <doctest.h>

#include <nlohmann/json.hpp>

#include "dissipeuler/limit.hpp"
#include "dissipeuler/young_measure.hpp"
#include "helpers.hpp"

using namespace dissipeuler;
using testing::random_field;

namespace {

PhysicalTrajectory constant_in_time(const PhysicalField& f, std::size_t snapshots, double dt) {
  PhysicalTrajectory t;
  for (std::size_t j = 0; j < snapshots; ++j) t.push_back({dt * static_cast<double>(j), f});
  return t;
}

// a e2 (-1)^(i1 + i2) on the grid
PhysicalField checkerboard(const TorusGrid& g, double a, int shift) {
  PhysicalField f(g);
  for (std::size_t p = 0; p < g.physical_size(); ++p) {
    const auto i1 = static_cast<int>(p / g.n());
    const auto i2 = static_cast<int>(p % g.n());
    f.at(1, p) = ((i1 + i2 + shift) % 2 == 0) ? a : -a;
  }
  return f;
}

}  // namespace

TEST_CASE("partition geometry") {
  Partition p{2, 4, 5, 1.0};
  CHECK(p.cells_per_slab() == 16);
  CHECK(p.cell_count() == 80);
  CHECK(p.cell_volume() == doctest::Approx(kTwoPi * kTwoPi / 16));
  CHECK(p.slab_of(0.0) == std::optional<std::size_t>(0));
  CHECK(p.slab_of(0.6) == std::optional<std::size_t>(3));
  CHECK(p.slab_of(3 * 0.2) == std::optional<std::size_t>(3));
  CHECK_FALSE(p.slab_of(1.0));
  CHECK_FALSE(p.slab_of(-0.1));
  CHECK(p.slab_centre(2) == doctest::Approx(0.5));
  // r = 8 / 4 = 2: centre of cell (1, 2) at ((2 + 0.5) dx, (4 + 0.5) dx)
  const double dx = kTwoPi / 8;
  const auto c = p.cell_centre(1 * 4 + 2, 8);
  CHECK(c[0] == doctest::Approx(2.5 * dx));
  CHECK(c[1] == doctest::Approx(4.5 * dx));
  CHECK(p.cell_of_point(3 * 8 + 5, 8) == 1 * 4 + 2);
  CHECK_THROWS((Partition{2, 4, 0, 1.0}.validate()));
}

TEST_CASE("value and sphere bins") {
  const BinSpec b{2.0, 4, 8};
  CHECK(value_bin({-1.9, -1.9, 0}, 2, b) == 0);
  CHECK(value_bin({1.9, 1.9, 0}, 2, b) == 15);
  CHECK(value_bin({0.1, -0.1, 0}, 2, b) == 2 * 4 + 1);
  bool clipped = false;
  CHECK(value_bin({5.0, 0.0, 0}, 2, b, &clipped) == 3 * 4 + 2);
  CHECK(clipped);
  CHECK(sphere_bin({1, 0, 0}, 2, b) == 0);
  CHECK(sphere_bin({0, 1, 0}, 2, b) == 2);
  CHECK(sphere_bin({0, -1, 0}, 2, b) == 6);
  CHECK(sphere_bin({0, 0, 1}, 3, b) == 3 * 2);
  CHECK(sphere_bin({0, 0, -1}, 3, b) == 0);
}

TEST_CASE("dirac embedding: barycenter and energy are exact on the grid") {
  const TorusGrid g(2, 16);
  const auto u = random_field(g, 4, 4);
  const Trajectory traj{{0.0, u}, {0.5, 0.5 * u}};
  const Partition part{2, 16, 2, 1.0};
  const auto m = dirac_embed(traj, part, BinSpec{});
  const auto phys = to_physical(u);
  double err = 0.0;
  for (std::size_t p = 0; p < g.physical_size(); ++p) {
    const auto b = barycenter(m, 0, p);
    err = std::max({err, std::abs(b[0] - phys.at(0, p)), std::abs(b[1] - phys.at(1, p))});
  }
  CHECK(err < 1e-15);
  CHECK(energy_of(m, 0) == doctest::Approx(0.5 * l2_norm_sq(u)).epsilon(1e-12));
  CHECK(energy_of(m, 1) == doctest::Approx(0.125 * l2_norm_sq(u)).epsilon(1e-12));
  CHECK(m.lambda_total() == 0.0);
  CHECK(m.diagnostics().samples == 2 * 256);

  // cell averages on a coarser partition equal the barycenters
  const Partition coarse{2, 4, 2, 1.0};
  const auto mc = dirac_embed(traj, coarse, BinSpec{});
  const auto avg = cell_averages(to_physical(traj), coarse);
  const auto bary = barycenter(mc);
  for (std::size_t i = 0; i < bary.size(); ++i) CHECK(std::abs(bary[i][0] - avg[i][0]) < 1e-14);  // different summation order
}

TEST_CASE("embedding keeps values beyond R in nu and counts them") {
  const TorusGrid g(2, 8);
  PhysicalField f(g);
  f.at(0, 3) = 10.0;
  const auto m = dirac_embed(constant_in_time(f, 1, 0.0), Partition{2, 8, 1, 1.0}, BinSpec{4.0, 8, 8});
  CHECK(m.diagnostics().clipped == 1);
  CHECK(m.lambda_total() == 0.0);
  CHECK(barycenter(m, 0, 3)[0] == 10.0);
}

TEST_CASE("oscillation family: nu = 1/2 delta_{+a} + 1/2 delta_{-a}") {
  const TorusGrid g(2, 32);
  std::vector<PhysicalTrajectory> family;
  for (int j = 0; j < 4; ++j) family.push_back(constant_in_time(checkerboard(g, 0.75, j), 2, 0.25));
  std::vector<const PhysicalTrajectory*> ptrs;
  for (const auto& t : family) ptrs.push_back(&t);
  const BinSpec bins{2.0, 16, 32};
  const auto m = estimate_from_family(ptrs, Partition{2, 8, 1, 1.0}, bins);
  YoungCell target;
  for (double s : {-0.75, 0.75}) target.nu.push_back({value_bin({0.0, s, 0.0}, 2, bins), 0.5, {0.0, s, 0.0}});
  std::sort(target.nu.begin(), target.nu.end(), [](const Atom& a, const Atom& b) { return a.bin < b.bin; });
  for (std::size_t c = 0; c < 64; ++c) CHECK(nu_total_variation(m.cell(0, c), target) < 1e-12);
  // barycenter 0, second moment a^2: the weak limit is 0 but the energy is not lost
  CHECK(std::abs(barycenter(m, 0, 5)[1]) < 1e-15);
  CHECK(second_moment(m.cell(0, 5)) == doctest::Approx(0.5625));
}

TEST_CASE("concentration family: lambda carries the escaping mass in the right direction") {
  const TorusGrid g(2, 16);
  const double dx = g.spacing();
  const double mass = 0.3;  // int |u|^2 dx of each spike
  std::vector<PhysicalTrajectory> family;
  for (int j = 1; j <= 3; ++j) {
    PhysicalField f(g);
    const double h = std::sqrt(mass) / dx;
    f.at(0, 5 * 16 + 7) = h / std::sqrt(2.0);
    f.at(1, 5 * 16 + 7) = h / std::sqrt(2.0);
    family.push_back(constant_in_time(f, 4, 0.25));
  }
  std::vector<const PhysicalTrajectory*> ptrs;
  for (const auto& t : family) ptrs.push_back(&t);
  const BinSpec bins{1.0, 8, 16};
  const auto m = estimate_from_family(ptrs, Partition{2, 8, 1, 1.0}, bins);
  CHECK(m.lambda_total() == doctest::Approx(mass * 1.0));
  const auto cell = m.partition().cell_of_point(5 * 16 + 7, 16);
  const auto& yc = m.cell(0, cell);
  REQUIRE(yc.nu_inf.size() == 1);
  CHECK(yc.nu_inf[0].bin == sphere_bin({1.0, 1.0, 0.0}, 2, bins));
  CHECK(yc.nu_inf[0].weight == 1.0);
  CHECK(yc.nu_inf[0].centroid[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(m.diagnostics().concentrated == 12);
  // nu renormalised over the retained (zero) samples
  CHECK(yc.nu.size() == 1);
  CHECK(yc.nu[0].weight == 1.0);
  CHECK(energy_of(m, 0) == doctest::Approx(0.5 * mass));
}

TEST_CASE("a cell with every sample beyond R gets delta_0 and is flagged") {
  const TorusGrid g(2, 8);
  PhysicalField f(g);
  for (std::size_t p = 0; p < 64; ++p) f.at(0, p) = 5.0;
  const auto t = constant_in_time(f, 1, 0.0);
  const auto m = estimate_from_family(std::vector<const PhysicalTrajectory*>{&t}, Partition{2, 2, 1, 1.0}, BinSpec{1.0, 4, 8});
  CHECK(m.diagnostics().empty_cells == 4);
  CHECK(m.cell(0, 0).empty_nu);
  CHECK(barycenter(m, 0, 0)[0] == 0.0);
  CHECK_THROWS(estimate_from_family(std::vector<const PhysicalTrajectory*>{}, Partition{}, BinSpec{}));
}

TEST_CASE("pairing of a dirac embedding matches quadrature") {
  const TorusGrid g(2, 32);
  const auto u = random_field(g, 9, 3);
  const auto phys = to_physical(u);
  const auto m = dirac_embed(PhysicalTrajectory{{0.0, phys}}, Partition{2, 16, 1, 1.0}, BinSpec{4.0, 16, 32});
  const TestIntegrand f("xi1", 2, [](double, const Vec3&, const Vec3& xi) { return xi[0]; });
  const Weight phi = [](double, const Vec3& x) { return std::cos(x[0]) + 0.5 * std::sin(x[1]); };
  double quad = 0.0;
  for (std::size_t p = 0; p < g.physical_size(); ++p) quad += phi(0.0, g.point(p)) * phys.at(0, p);
  quad *= g.volume() / static_cast<double>(g.physical_size());
  CHECK(pairing(m, f, phi) == doctest::Approx(quad).epsilon(0.02));
  CHECK(pairing_slab(m, 0, f, phi) == doctest::Approx(pairing(m, f, phi)));
  const TestIntegrand one("1", 2, [](double, const Vec3&, const Vec3&) { return 1.0; });
  CHECK(pairing(m, one) == doctest::Approx(g.volume()));
}

TEST_CASE("test integrands: recession functions and growth norm") {
  const TestIntegrand quad("|xi|^2", 2, [](double, const Vec3&, const Vec3& xi) { return xi[0] * xi[0] + xi[1] * xi[1]; });
  CHECK(quad.f_inf(0.0, {0, 0, 0}, {0.6, 0.8, 0.0}) == doctest::Approx(1.0));
  const TestIntegrand lin("xi1", 2, [](double, const Vec3&, const Vec3& xi) { return xi[0]; });
  CHECK(std::abs(lin.f_inf(0.0, {0, 0, 0}, {1.0, 0.0, 0.0})) < 1e-5);
  CHECK_THROWS(TestIntegrand("oscillating", 2, [](double, const Vec3&, const Vec3& xi) {
    const double r2 = xi[0] * xi[0] + xi[1] * xi[1];
    return r2 * std::sin(std::sqrt(r2));
  }));
  const TestIntegrand prod("xi1 xi2", 2, [](double, const Vec3&, const Vec3& xi) { return xi[0] * xi[1]; });
  CHECK(g2_norm(prod, Partition{2, 4, 1, 1.0}) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("weak* distance and dictionary") {
  CHECK(default_dictionary(2, 1.0).size() == 30);
  CHECK(default_dictionary(3, 1.0).size() == 50);
  const TorusGrid g(2, 16);
  const auto u = random_field(g, 1, 3);
  const auto v = random_field(g, 2, 3);
  const Partition part{2, 8, 2, 1.0};
  const auto a = dirac_embed(Trajectory{{0.0, u}, {0.5, u}}, part, BinSpec{});
  const auto b = dirac_embed(Trajectory{{0.0, v}, {0.5, v}}, part, BinSpec{});
  CHECK(weakstar_distance(a, a) == 0.0);
  CHECK(weakstar_distance(a, b) > 0.0);
  CHECK(weakstar_distance(a, b) == weakstar_distance(b, a));
  const auto c = dirac_embed(Trajectory{{0.0, u}}, Partition{2, 4, 2, 1.0}, BinSpec{});
  CHECK_THROWS(weakstar_distance(a, c));

  const auto j = to_json(a);
  CHECK(j.contains("partition"));
  CHECK(j.at("slabs").size() == 2);
  CHECK(j.contains("dictionary"));
  CHECK_FALSE(to_json(a, false).contains("dictionary"));
}

TEST_CASE("property: family barycenter equals the mean of member cell averages") {
  const TorusGrid g(2, 16);
  const Partition part{2, 4, 1, 1.0};
  std::vector<PhysicalTrajectory> fam;
  for (std::uint64_t s = 0; s < 5; ++s) fam.push_back({{0.0, to_physical(random_field(g, 20 + s, 3))}});
  std::vector<const PhysicalTrajectory*> ptrs;
  for (const auto& t : fam) ptrs.push_back(&t);
  const auto m = estimate_from_family(ptrs, part, BinSpec{50.0, 16, 32});
  const auto bary = barycenter(m);
  for (std::size_t c = 0; c < part.cells_per_slab(); ++c) {
    double mean = 0.0;
    for (const auto& t : fam) mean += cell_averages(t, part)[c][1] / 5.0;
    CHECK(bary[c][1] == doctest::Approx(mean).epsilon(1e-12).scale(1e-12));
  }
}
