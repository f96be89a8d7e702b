#include <doctest.h>

#include "dissipeuler/weak_strong.hpp"
#include "helpers.hpp"

using namespace dissipeuler;
using testing::four_mode_forcing;
using testing::random_field;

namespace {

WeakStrongPath synthetic(std::vector<double> f, std::vector<double> grad, double slack) {
  WeakStrongPath p;
  for (std::size_t j = 0; j < f.size(); ++j) p.times.push_back(0.1 * j);
  p.f_measure = f;
  p.f_expanded = f;
  p.gradient_sup = std::move(grad);
  p.slack.assign(f.size(), slack);
  p.horizon = 0.1 * f.size();
  return p;
}

}  // namespace

TEST_CASE("relative energy: zero on the reference itself, the two forms agree") {
  const TorusGrid g(2, 16);
  const auto v = random_field(g, 1, 4);
  const auto u = random_field(g, 2, 4);
  const Partition part{2, 16, 1, 1.0};
  const auto self = dirac_embed(Trajectory{{0.0, v}}, part, BinSpec{});
  const auto f0 = relative_energy(self, v, 0);
  CHECK(std::abs(f0.measure_form) < 1e-28);
  CHECK(std::abs(f0.expanded_form) < 1e-12);

  const auto other = dirac_embed(Trajectory{{0.0, u}}, part, BinSpec{});
  const auto f = relative_energy(other, v, 0);
  CHECK(f.measure_form == doctest::Approx(0.5 * l2_norm_sq(u - v)).epsilon(1e-12));
  CHECK(f.expanded_form == doctest::Approx(f.measure_form).epsilon(1e-12));
  CHECK_THROWS(relative_energy(other, v, 1));
}

TEST_CASE("property: F >= 0 and the forms agree for pooled families with concentration") {
  const TorusGrid g(2, 16);
  for (std::uint64_t s = 0; s < 8; ++s) {
    std::vector<Trajectory> fam;
    for (std::uint64_t j = 0; j < 3; ++j) fam.push_back({{0.0, static_cast<double>(j + 1) * random_field(g, 10 * s + j, 3)}});
    const auto m = estimate_from_family(fam, Partition{2, 4, 1, 1.0}, BinSpec{1.5, 8, 16});
    const auto v = random_field(g, 99 + s, 2);
    const auto f = relative_energy(m, v, 0);
    CHECK(f.measure_form >= 0.0);
    CHECK(std::abs(f.measure_form - f.expanded_form) <= 1e-12 * (1.0 + f.measure_form));
  }
}

TEST_CASE("cross-term identity is exact for resolved fields") {
  const TorusGrid g(2, 32);
  const auto v = random_field(g, 5, 3);
  const auto u = random_field(g, 6, 3);
  const Partition part{2, 32, 1, 1.0};
  const auto m = dirac_embed(Trajectory{{0.0, u}}, part, BinSpec{8.0, 16, 32});
  const auto c = crossterm_identity_check(m, Trajectory{{0.0, v}}, 0, 1);
  CHECK(std::abs(c.a_convective) > 1e-3);
  CHECK(c.residual <= 1e-10 * (std::abs(c.a_convective) + std::abs(c.rhs)));
  CHECK_THROWS(crossterm_identity_check(m, Trajectory{{0.5, v}}, 0, 1));
}

TEST_CASE("stopping time scans from t = 0") {
  const std::vector<double> t{0.0, 0.1, 0.2, 0.3}, g{1.0, 3.0, 5.0, 7.0};
  CHECK(stopping_time(t, g, 0.4, 2.0) == doctest::Approx(0.1));
  CHECK(stopping_time(t, g, 0.4, 0.5) == 0.0);
  CHECK(stopping_time(t, g, 0.4, 10.0) == 0.4);
  CHECK(stopping_time(t, g, 0.15, 4.0) == 0.15);
  CHECK_THROWS(stopping_time(t, g, 0.4, 0.0));
}

TEST_CASE("Gronwall audit and Tschebyscheff check on synthetic paths") {
  std::vector<WeakStrongPath> quiet{synthetic({0, 0, 0, 0}, {1, 1, 1, 1}, 0.0),
                                    synthetic({0, 0.001, 0.002, 0.002}, {1, 2, 1, 1}, 0.01)};
  const auto ok = gronwall_audit(quiet, 1.0);
  CHECK(ok.pass);
  CHECK(ok.envelope[0] == doctest::Approx(0.005));
  CHECK(ok.envelope[2] == doctest::Approx(0.005 * std::exp(0.2)));
  CHECK(ok.sup_stopped.mean == doctest::Approx(0.0005));  // the second path stops at t = 0.1 where grad v = 2 > L

  std::vector<WeakStrongPath> loud{synthetic({0, 0.5, 1.0, 1.5}, {1, 1, 1, 1}, 0.01)};
  CHECK_FALSE(gronwall_audit(loud, 1.0).pass);
  // stopping freezes F: once grad v exceeds L the growth is not counted
  std::vector<WeakStrongPath> stopped{synthetic({0, 0.001, 1.0, 1.5}, {1, 9, 9, 9}, 0.01)};
  const auto s = gronwall_audit(stopped, 5.0);
  CHECK(s.stopped.back().mean == doctest::Approx(0.001));
  CHECK(s.pass);

  const auto tc = tschebyscheff_check(stopped, 5.0);
  CHECK(tc.probability.mean == 1.0);
  CHECK(tc.bound == doctest::Approx(9.0 / 5.0));
  CHECK(tc.pass);
  CHECK_THROWS(gronwall_audit({}, 1.0));
}

TEST_CASE("strong reference on the weak candidate's noise: F(0) = 0 and small F") {
  SolverConfig c;
  c.grid = TorusGrid(2, 16);
  c.dt = 0.02;
  c.horizon = 0.2;
  c.viscosity = 0.02;
  c.forcing = four_mode_forcing(0.2);
  c.initial.kind = InitialLaw::Kind::RandomPhase;
  c.initial.k_max = 3;
  c.initial.k_peak = 1.5;
  c.snapshot_every = 2;
  const StrongReferenceOptions opt{32, 1, 1e-3};
  const auto rc = reference_config(c, opt);
  CHECK(rc.grid.n() == 32);
  CHECK(rc.viscosity == 0.0);
  CHECK(rc.dt == doctest::Approx(0.01));
  CHECK(rc.refinement == 1);
  CHECK(rc.snapshot_every == 4);

  const auto ref = strong_reference(c, 3, 0, opt);
  CHECK(ref.error.empty());
  REQUIRE(ref.v.size() == 6);
  CHECK(ref.horizon == doctest::Approx(0.2));
  CHECK(ref.energy_equality_residual < 1e-2);
  const auto weak = run_path(c, 3, 0);
  const Partition part{2, 16, 5, c.horizon};
  const auto m = dirac_embed(weak.snapshots, part, BinSpec{});
  const auto w = compare_paths(m, ref, weak.trace, c.grid, c.viscosity, 0);
  REQUIRE(w.times.size() == 5);
  CHECK(std::abs(w.f_measure[0]) < 1e-20);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(w.f_measure[j] >= 0.0);
    CHECK(w.f_measure[j] < 1e-2 * weak.trace.energy[0]);
    CHECK(w.slack[j] >= 0.0);
  }
  // The reference is shared across viscosities: identical snapshots.
  auto c2 = c;
  c2.viscosity = 0.1;
  const auto ref2 = strong_reference(c2, 3, 0, opt);
  CHECK(l2_norm_sq(ref2.v.back().field - ref.v.back().field) == 0.0);
}
