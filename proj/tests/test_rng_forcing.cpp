#include <doctest.h>

#include <sstream>

#include "dissipeuler/forcing.hpp"
#include "dissipeuler/rng.hpp"
#include "dissipeuler/stats.hpp"
#include "helpers.hpp"

using namespace dissipeuler;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("keyed draws are pure functions of their key") {
  const RngKey k{42, 7};
  CHECK(keyed_normal(k, 5, 1, stream::kWiener) == keyed_normal(k, 5, 1, stream::kWiener));
  CHECK(keyed_normal(k, 5, 1, stream::kWiener) != keyed_normal(k, 5, 2, stream::kWiener));
  CHECK(keyed_normal(k, 5, 1, stream::kWiener) != keyed_normal(k, 5, 1, stream::kInitial));
  CHECK(keyed_normal(k, 5, 1, stream::kWiener) != keyed_normal({42, 8}, 5, 1, stream::kWiener));
  CHECK(keyed_normal(k, 5, 1, stream::kWiener) != keyed_normal({43, 7}, 5, 1, stream::kWiener));
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = keyed_uniform(k, i, 0, stream::kTest);
    CHECK((u > 0.0 && u < 1.0));
  }
}

TEST_CASE("normal draws: moments within Monte Carlo bands") {
  const std::size_t n = 200000;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = keyed_normal({1, 0}, i, 0, stream::kTest);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(estimate_mean(x).mean) < 4 * sd);
  CHECK(std::abs(sample_variance(x) - 1.0) < 4 * std::sqrt(2.0) * sd);
  CHECK(std::abs(sample_skewness(x)) < 4 * std::sqrt(6.0) * sd);
  CHECK(std::abs(sample_excess_kurtosis(x)) < 4 * std::sqrt(24.0) * sd);
}

TEST_CASE("Brownian bridge refinement reproduces coarse increments") {
  const RngKey key{9, 3};
  const double dt = 0.1;
  for (std::uint32_t mode = 0; mode < 3; ++mode)
    for (std::uint64_t n = 0; n < 50; ++n) {
      const double coarse = wiener_increment(key, mode, n, 0, dt);
      const double fine = wiener_increment(key, mode, 2 * n, 1, dt) + wiener_increment(key, mode, 2 * n + 1, 1, dt);
      CHECK(fine == doctest::Approx(coarse).epsilon(1e-12).scale(1.0));
      double finer = 0.0;
      for (std::uint64_t j = 0; j < 8; ++j) finer += wiener_increment(key, mode, 8 * n + j, 3, dt);
      CHECK(std::abs(finer - coarse) < 1e-12);
    }
  // level-L increments have variance dt / 2^L
  for (int level : {0, 2, 5}) {
    std::vector<double> x;
    for (std::uint64_t n = 0; n < 40000; ++n) x.push_back(wiener_increment(key, 0, n, level, dt));
    const double var = std::ldexp(dt, -level);
    CHECK(std::abs(sample_variance(x) / var - 1.0) < 4 * std::sqrt(2.0 / 40000.0));
  }
}

TEST_CASE("increments are uncorrelated across steps and modes") {
  const std::size_t n = 50000;
  const auto path = sample_increments({5, 1}, 2, 0.01, 0, 0, n);
  double lag = 0.0, cross = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) lag += path.increment(i, 0) * path.increment(i + 1, 0);
  for (std::size_t i = 0; i < n; ++i) cross += path.increment(i, 0) * path.increment(i, 1);
  const double band = 4.0 * 0.01 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(lag / (n - 1)) < band);
  CHECK(std::abs(cross / n) < band);
}

TEST_CASE("sample_increments is independent of thread count and segmentation") {
  const auto a = sample_increments({3, 2}, 4, 0.05, 1, 0, 300, 1);
  const auto b = sample_increments({3, 2}, 4, 0.05, 1, 0, 300, 4);
  const auto c = sample_increments({3, 2}, 4, 0.05, 1, 100, 300, 1);
  CHECK(a.steps() == 300);
  CHECK(a.dt() == doctest::Approx(0.025));
  for (std::size_t s = 0; s < 300; ++s)
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(a.increment(s, k) == b.increment(s, k));
      if (s >= 100) CHECK(c.increment(s - 100, k) == a.increment(s, k));
    }
  double beta = 0.0;
  for (std::size_t s = 0; s < 17; ++s) beta += a.increment(s, 2);
  CHECK(a.beta(2, 17) == doctest::Approx(beta));
}

TEST_CASE("u0 norm and CSV layout") {
  const WienerPath p({1, 4}, 2, 0.5, 0, 10, {0.1, 0.2, -0.3, 0.4});
  // beta after 2 steps: (-0.2, 0.6); norm = sqrt(0.04 + 0.36 / 4)
  CHECK(u0_norm(p, 2) == doctest::Approx(std::sqrt(0.04 + 0.09)));
  std::ostringstream out;
  write_path_csv(out, p);
  CHECK(out.str() == "path_id,k,n,dW\n4,1,10,0.10000000000000001\n4,2,10,0.20000000000000001\n"
                     "4,1,11,-0.29999999999999999\n4,2,11,0.40000000000000002\n");
}

TEST_CASE("forcing operator: validation, normalisation and Hilbert-Schmidt norm") {
  CHECK_THROWS(ForcingOperator(2, {}));
  CHECK_THROWS(ForcingOperator(2, {{{1, 0, 0}, {1.0, 0.0, 0.0}, 1.0, ModePhase::Cos}}));  // not orthogonal to k
  CHECK_THROWS(ForcingOperator(2, {{{1, 0, 0}, {0.0, 1.0, 0.0}, -1.0, ModePhase::Cos}}));
  CHECK_THROWS(ForcingOperator(2, {{{0, 0, 0}, {0.0, 1.0, 0.0}, 1.0, ModePhase::Sin}}));
  CHECK_NOTHROW(ForcingOperator(2, {{{0, 0, 0}, {0.0, 1.0, 0.0}, 1.0, ModePhase::Cos}}));  // uniform push

  const auto phi = testing::four_mode_forcing(0.3);
  CHECK(hs_norm_sq(phi) == doctest::Approx(4 * 0.09));
  CHECK(hs_norm_sq(ForcingOperator::none(2)) == 0.0);
  CHECK(hs_norm_sq(phi.scaled(2.0)) == doctest::Approx(4 * 0.36));

  const TorusGrid g(2, 16);
  for (const auto& m : phi.modes()) {
    const auto f = mode_field(m, g);
    CHECK(l2_norm_sq(f) == doctest::Approx(0.09));
    CHECK(divergence_residual(f) < 1e-15);
  }
  // (1,0) cos mode with direction e2: sigma / (pi sqrt 2) * cos(x1) e2
  const auto f0 = to_physical(mode_field(phi.modes()[0], g));
  const auto x = g.point(5 * 16 + 3);
  CHECK(f0.at(1, 5 * 16 + 3) == doctest::Approx(0.3 / (M_PI * std::sqrt(2.0)) * std::cos(x[0])));
  CHECK(f0.at(0, 5 * 16 + 3) == doctest::Approx(0.0));

  // images are orthogonal, so project(Phi e_j) = sigma^2 delta_jk
  const ForcingOnGrid on(phi, g);
  std::vector<double> proj(4);
  on.project(on.image(2), proj);
  CHECK(proj[2] == doctest::Approx(0.09));
  CHECK(std::abs(proj[0]) < 1e-15);
  CHECK(std::abs(proj[3]) < 1e-15);

  const std::vector<double> dw{0.5, -1.0, 0.25, 2.0};
  SpectralField u(g);
  on.add_noise(u, dw);
  const auto direct = apply_noise(phi, dw, g);
  for (std::size_t i = 0; i < u.raw().size(); ++i) CHECK(std::abs(u.raw()[i] - direct.raw()[i]) < 1e-15);
  CHECK(l2_norm_sq(u) == doctest::Approx(0.09 * (0.25 + 1.0 + 0.0625 + 4.0)));
  CHECK_THROWS(mode_field({{9, 0, 0}, {0.0, 1.0, 0.0}, 1.0, ModePhase::Cos}, g));
}

TEST_CASE("statistics helpers") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto e = estimate_mean(x);
  CHECK(e.mean == 2.5);
  CHECK(sample_variance(x) == doctest::Approx(5.0 / 3.0));
  CHECK(e.std_error == doctest::Approx(std::sqrt(5.0 / 12.0)));
  CHECK(e.half_width == doctest::Approx(1.959963984540054 * e.std_error));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054));
  const std::vector<double> h{0.1, 0.05, 0.025}, err{0.01, 0.0025, 0.000625};
  CHECK(observed_order(h, err) == doctest::Approx(2.0));
  CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 1.0);
}
