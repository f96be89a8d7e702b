#include <doctest.h>

#include "dissipeuler/limit.hpp"
#include "helpers.hpp"

using namespace dissipeuler;
using testing::four_mode_forcing;

namespace {

SolverConfig small_config() {
  SolverConfig c;
  c.grid = TorusGrid(2, 16);
  c.dt = 0.02;
  c.horizon = 0.4;
  c.viscosity = 0.05;
  c.forcing = four_mode_forcing(0.3);
  c.initial.kind = InitialLaw::Kind::RandomPhase;
  c.initial.k_max = 3;
  c.initial.k_peak = 1.5;
  c.snapshot_every = 1;
  return c;
}

SpectralField probe(const TorusGrid& g) {
  return mode_field({{1, 1, 0}, {1.0, -1.0, 0.0}, 1.0, ModePhase::Cos}, g);
}

}  // namespace

TEST_CASE("viscosity ladder: shared noise, consistent barycenters, distances") {
  ViscosityLadder ladder;
  ladder.viscosities = {0.2, 0.1, 0.05};
  ladder.base = small_config();
  ladder.base.snapshot_every = 5;
  ladder.seed = 4;
  ladder.path_ids = {0, 1};
  ladder.partition = Partition{2, 8, 4, 0.4};
  const auto r = run_ladder(ladder, 2);
  REQUIRE(r.paths.size() == 2);
  CHECK(r.completed);
  CHECK(r.mean_distance.size() == 2);
  for (const auto& p : r.paths) {
    CHECK(p.levels[0].beta == p.levels[2].beta);
    CHECK(p.barycenter_error < 1e-12);
    REQUIRE(p.family);
    CHECK(p.measures.size() == 3);
    CHECK(p.successive_distance[0] == doctest::Approx(weakstar_distance(p.measures[0], p.measures[1])));
  }
  CHECK(ladder.level_config(2).viscosity == 0.05);
  ViscosityLadder bad = ladder;
  bad.viscosities = {0.1, 0.2};
  CHECK_THROWS(bad.validate());
  // thread count does not change results
  const auto r1 = run_ladder(ladder, 1);
  CHECK(r1.mean_distance == r.mean_distance);
}

TEST_CASE("momentum residual: the scheme satisfies the left-point weak form") {
  auto c = small_config();
  c.viscosity = 0.0;
  const auto run = run_path(c, 3, 0);
  const std::size_t steps = c.steps();
  const Partition part{2, 16, steps, c.horizon};  // cells are grid points, one snapshot per slab
  const auto v = dirac_embed(run.snapshots, part, BinSpec{8.0, 16, 32});
  const auto phi = probe(c.grid);
  const auto r = momentum_residual(v, run.snapshots, c.forcing, run.beta[steps], phi, c.horizon, 0.0);
  CHECK(std::abs(r.lhs) > 1e-3);
  CHECK(r.residual < 1e-12 * (1.0 + std::abs(r.lhs)));
  // matches the probe bookkeeping of the solver
  c.probes = {phi};
  const auto run2 = run_path(c, 3, 0);
  CHECK(run2.probes[0].convective.back() == doctest::Approx(r.convective).epsilon(1e-10));

  // with viscosity the integrating factor damps the convective and noise increments
  // by exp(-eps |k|^2 h), so the left-point weak form is off by O(eps h): halving dt halves it
  c.viscosity = 0.05;
  c.probes.clear();
  auto viscous_residual = [&](double dt, int refinement) {
    auto cv = c;
    cv.dt = dt;
    cv.refinement = refinement;
    const auto run = run_path(cv, 3, 0);
    const Partition pv{2, 16, cv.steps(), cv.horizon};
    const auto m = dirac_embed(run.snapshots, pv, BinSpec{8.0, 16, 32});
    return momentum_residual(m, run.snapshots, cv.forcing, run.beta.back(), phi, cv.horizon, cv.viscosity);
  };
  const auto rv = viscous_residual(0.02, 0);
  const auto rh = viscous_residual(0.01, 1);
  CHECK(rv.viscous != 0.0);
  CHECK(rv.residual > 1e-10);
  CHECK(rh.residual / rv.residual == doctest::Approx(0.5).epsilon(0.2));
  const auto vr = run_path(c, 3, 0);
  const auto vv = dirac_embed(vr.snapshots, part, BinSpec{8.0, 16, 32});
  CHECK_THROWS(momentum_residual(vv, vr.snapshots, c.forcing, vr.beta[steps], phi, 0.013, 0.05));
}

TEST_CASE("history functionals and variation oracles") {
  HistoryFunctional h;
  const std::vector<double> beta{0.4, -3.0};
  CHECK(h.evaluate(10.0, beta) == 1.0);
  h.kind = HistoryFunctional::Kind::ClampedPairing;
  h.scale = 2.0;
  CHECK(h.evaluate(0.5, beta) == doctest::Approx(0.75));
  CHECK(h.evaluate(-5.0, beta) == 0.0);
  h.kind = HistoryFunctional::Kind::ClampedBeta;
  h.mode = 1;
  h.scale = 1.0;
  CHECK(h.evaluate(0.0, beta) == 0.0);
  CHECK(h.name() == "h=clamp(1/2+beta2(s)/1)");

  const TorusGrid g(2, 16);
  const auto phi_op = four_mode_forcing(0.3);
  const ForcingOnGrid on(phi_op, g);
  const auto phi = probe(g);  // unit-norm copy of the third forcing direction
  CHECK(cross_variation(on, phi, 2, 0.5) == doctest::Approx(0.5 * 0.3));
  CHECK(std::abs(cross_variation(on, phi, 0, 0.5)) < 1e-15);
  CHECK(quadratic_variation(on, phi, 0.5) == doctest::Approx(0.5 * 0.09));
}

TEST_CASE("martingale test: exact oracles on the linear model") {
  auto c = small_config();
  c.transport = false;
  c.snapshot_every = 0;
  c.probes = {probe(c.grid), mode_field({{1, 0, 0}, {0.0, 1.0, 0.0}, 1.0, ModePhase::Cos}, c.grid)};
  std::vector<PathResult> ens;
  for (std::uint64_t p = 0; p < 200; ++p) ens.push_back(run_path(c, 12, p));
  MartingaleDesign d;
  d.probes = {0, 1};
  d.windows = {{5, 10}, {10, 20}};
  d.histories = {HistoryFunctional{}, HistoryFunctional{HistoryFunctional::Kind::ClampedBeta, 0.5, 0}};
  d.modes = {0, 2};
  const auto rep = martingale_test(ens, c, d);
  CHECK(rep.tests == 2 * 2 * 2 * 4);
  CHECK(rep.paths == 200);
  CHECK(rep.z == doctest::Approx(normal_quantile(1.0 - 0.05 / (2.0 * 32))));
  CHECK(rep.pass);
  // too small an ensemble is refused
  std::vector<PathResult> few(ens.begin(), ens.begin() + 10);
  CHECK_THROWS(martingale_test(few, c, d));
  // M read from the bookkeeping is exactly sum_k <Phi e_k, phi> beta_k on the linear Stokes-free model
  auto c0 = c;
  c0.viscosity = 0.0;
  const auto r = run_path(c0, 12, 0);
  const ForcingOnGrid on(c0.forcing, c0.grid);
  const double expected = inner_product(on.image(2), c0.probes[0]) * r.beta.back()[2];
  CHECK(r.probes[0].martingale(r.trace.size() - 1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("energy inequality for a dirac measure reproduces the trace") {
  auto c = small_config();
  c.snapshot_every = 5;
  const auto run = run_path(c, 6, 0);
  const Partition part{2, 16, 4, c.horizon};
  const auto v = dirac_embed(run.snapshots, part, BinSpec{8.0, 16, 32});
  const auto tol = energy_tolerance(2.0, c.dt, run.trace.energy[0]);
  const auto rep = energy_inequality_limit(v, {&run.trace}, hs_norm_sq(c.forcing), tol);
  REQUIRE(rep.slab_energy.size() == 4);
  for (std::size_t s = 0; s < 4; ++s) CHECK(rep.slab_energy[s] == doctest::Approx(run.trace.energy[5 * s]).epsilon(1e-12));
  CHECK(rep.pass);
  CHECK(rep.max_defect <= tol);
}
