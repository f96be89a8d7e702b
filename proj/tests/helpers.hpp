#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "dissipeuler/forcing.hpp"
#include "dissipeuler/rng.hpp"
#include "dissipeuler/spectral.hpp"

namespace testing {

using namespace dissipeuler;

// Divergence-free field with Gaussian coefficients on |k_i| <= kmax, keyed so
// tests are reproducible.
inline SpectralField random_field(const TorusGrid& grid, std::uint64_t seed, int kmax) {
  SpectralField f(grid);
  const RngKey key{seed, 0};
  for (std::size_t i = 0; i < grid.spectral_size(); ++i) {
    const auto k = grid.wavevector(i);
    bool keep = true;
    for (int d = 0; d < grid.dim(); ++d) keep = keep && std::abs(k[d]) <= kmax;
    if (!keep) continue;
    for (int c = 0; c < grid.dim(); ++c)
      f.at(c, i) = Complex(keyed_normal(key, i, 2 * c, stream::kTest), keyed_normal(key, i, 2 * c + 1, stream::kTest));
  }
  // Round trip enforces Hermitian symmetry on the k_last = 0 plane.
  return leray_project(to_spectral(to_physical(f)));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dissipeuler_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

inline ForcingOperator four_mode_forcing(double sigma) {
  return ForcingOperator(2, {{{1, 0, 0}, {0.0, 1.0, 0.0}, sigma, ModePhase::Cos},
                             {{0, 1, 0}, {1.0, 0.0, 0.0}, sigma, ModePhase::Sin},
                             {{1, 1, 0}, {1.0, -1.0, 0.0}, sigma, ModePhase::Cos},
                             {{2, 1, 0}, {1.0, -2.0, 0.0}, sigma, ModePhase::Sin}});
}

}  // namespace testing
