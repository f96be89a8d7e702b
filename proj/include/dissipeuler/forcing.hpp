#pragma once

// Finite-rank additive forcing Phi and the cylindrical Wiener process driving it.
//
// Phi e_k = sigma_k g_k where g_k is an L^2-normalised divergence-free trigonometric
// mode direction_k * c * cos(k.x) (or sin). W = sum_k beta_k e_k with independent
// Brownian motions beta_k whose increments come from the keyed Philox generator.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dissipeuler/rng.hpp"
#include "dissipeuler/spectral.hpp"

namespace dissipeuler {

struct ForcingMode {
  Wavevector k{0, 0, 0};
  Vec3 direction{0.0, 0.0, 0.0};
  double sigma = 0.0;
  ModePhase phase = ModePhase::Cos;
};

class ForcingOperator {
 public:
  // Validates: rank >= 1, sigma >= 0, direction non-zero and orthogonal to k.
  // Directions are normalised to unit length.
  ForcingOperator(int dim, std::vector<ForcingMode> modes);

  // The zero operator of rank one (sigma = 0).
  static ForcingOperator none(int dim);

  int dim() const { return dim_; }
  std::size_t rank() const { return modes_.size(); }
  const std::vector<ForcingMode>& modes() const { return modes_; }
  ForcingOperator scaled(double factor) const;

 private:
  int dim_;
  std::vector<ForcingMode> modes_;
};

// sum_k sigma_k^2 ||g_k||^2 with ||g_k|| = 1.
double hs_norm_sq(const ForcingOperator& phi);

// sigma_k g_k on a grid (direction normalised here too); throws if k is beyond the grid's Nyquist limit.
SpectralField mode_field(const ForcingMode& mode, const TorusGrid& grid);

// Phi restricted to a grid: sparse spectral images of the basis vectors.
class ForcingOnGrid {
 public:
  ForcingOnGrid(const ForcingOperator& phi, const TorusGrid& grid);

  const TorusGrid& grid() const { return grid_; }
  std::size_t rank() const { return images_.size(); }
  // u += sum_k dW_k Phi e_k
  void add_noise(SpectralField& u, std::span<const double> increments) const;
  // <u, Phi e_k> for every k
  void project(const SpectralField& u, std::span<double> out) const;
  const SpectralField& image(std::size_t k) const { return images_[k]; }

 private:
  TorusGrid grid_;
  std::vector<SpectralField> images_;
  // Nonzero spectral indices per mode.
  std::vector<std::vector<std::size_t>> support_;
};

SpectralField apply_noise(const ForcingOperator& phi, std::span<const double> increments, const TorusGrid& grid);

// Brownian increments dW_k(n) on a dyadic time lattice. Level 0 has step dt_base;
// level L subdivides each level-(L-1) step by Brownian-bridge midpoint sampling,
// so sums of fine increments reproduce the coarse ones.
double wiener_increment(RngKey key, std::uint32_t mode, std::uint64_t step, int level, double dt_base);

class WienerPath {
 public:
  WienerPath(RngKey key, std::size_t modes, double dt_base, int level, std::uint64_t step_begin,
             std::vector<double> increments);

  RngKey key() const { return key_; }
  std::size_t modes() const { return modes_; }
  double dt() const;
  double dt_base() const { return dt_base_; }
  int level() const { return level_; }
  std::uint64_t step_begin() const { return step_begin_; }
  std::size_t steps() const { return modes_ == 0 ? 0 : increments_.size() / modes_; }
  std::span<const double> increments(std::size_t local_step) const;
  double increment(std::size_t local_step, std::size_t mode) const {
    return increments_[local_step * modes_ + mode];
  }
  // beta_k after `local_steps` steps of this segment, starting from zero.
  double beta(std::size_t mode, std::size_t local_steps) const;

 private:
  RngKey key_;
  std::size_t modes_;
  double dt_base_;
  int level_;
  std::uint64_t step_begin_;
  std::vector<double> increments_;
};

WienerPath sample_increments(RngKey key, std::size_t modes, double dt_base, int level, std::uint64_t step_begin,
                             std::uint64_t step_end, int threads = 1);

// (sum_k beta_k(t)^2 / k^2)^{1/2} with k the 1-based mode index; t = local_steps * dt.
double u0_norm(const WienerPath& path, std::size_t local_steps);

// CSV columns path_id,k,n,dW with k 1-based and n the absolute step index.
void write_path_csv(std::ostream& out, const WienerPath& path);

}  // namespace dissipeuler
