#pragma once

// Fourier representation of periodic vector fields on the torus [0, 2*pi)^dim.
//
// Coefficients are normalised so that u(x) = sum_k uhat(k) exp(i k.x); only the
// half spectrum with last wavevector component in [0, n/2] is stored (FFTW r2c
// layout). Physical arrays are row-major with x1 the slowest axis.

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dissipeuler {

using Complex = std::complex<double>;
using Wavevector = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

class TorusGrid {
 public:
  TorusGrid(int dim, int n);

  int dim() const { return dim_; }
  int n() const { return n_; }
  std::size_t physical_size() const { return physical_size_; }
  std::size_t spectral_size() const { return spectral_size_; }
  double spacing() const { return kTwoPi / n_; }
  double volume() const;
  // Largest retained |k_i| under the 2/3 rule (3|k_i| < n).
  int dealias_cutoff() const { return (n_ - 1) / 3; }

  Wavevector wavevector(std::size_t spectral_index) const;
  // Wavevector with Nyquist components zeroed, used for differentiation.
  Vec3 derivative_wavevector(std::size_t spectral_index) const;
  double mode_weight(std::size_t spectral_index) const;
  // Storage index of k if k lies in the stored half spectrum.
  std::optional<std::size_t> index_of(const Wavevector& k) const;
  // Physical coordinates of grid point p.
  Vec3 point(std::size_t physical_index) const;

  bool operator==(const TorusGrid& other) const = default;

 private:
  int dim_;
  int n_;
  std::size_t physical_size_;
  std::size_t spectral_size_;
};

class PhysicalField {
 public:
  explicit PhysicalField(TorusGrid grid);

  const TorusGrid& grid() const { return grid_; }
  std::span<double> component(int c);
  std::span<const double> component(int c) const;
  double& at(int c, std::size_t p) { return data_[c * grid_.physical_size() + p]; }
  double at(int c, std::size_t p) const { return data_[c * grid_.physical_size() + p]; }
  double max_abs() const;
  // Largest pointwise Euclidean norm |u(x)|.
  double max_norm() const;

 private:
  TorusGrid grid_;
  std::vector<double> data_;
};

class SpectralField {
 public:
  explicit SpectralField(TorusGrid grid);

  const TorusGrid& grid() const { return grid_; }
  int components() const { return grid_.dim(); }
  std::span<Complex> component(int c);
  std::span<const Complex> component(int c) const;
  Complex& at(int c, std::size_t k) { return data_[c * grid_.spectral_size() + k]; }
  const Complex& at(int c, std::size_t k) const { return data_[c * grid_.spectral_size() + k]; }
  std::span<const Complex> raw() const { return data_; }
  std::span<Complex> raw() { return data_; }

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double s);
  // this += s * other
  SpectralField& axpy(double s, const SpectralField& other);

 private:
  TorusGrid grid_;
  std::vector<Complex> data_;
};

SpectralField operator+(SpectralField a, const SpectralField& b);
SpectralField operator-(SpectralField a, const SpectralField& b);
SpectralField operator*(double s, SpectralField a);

SpectralField to_spectral(const PhysicalField& f);
PhysicalField to_physical(const SpectralField& f);

// Orthogonal projection onto divergence-free fields; the mean mode is kept.
SpectralField leray_project(const SpectralField& f);
// Zero every mode outside the 2/3 band.
SpectralField dealias(const SpectralField& f);
// Entry j is the field d_j u, so gradient(u)[j].component(i) = d_j u_i.
std::vector<SpectralField> gradient(const SpectralField& u);
// Leray projection of -div(u (x) u), 2/3-rule dealiased.
SpectralField convective_term(const SpectralField& u);
// Same, also reporting max_x |u(x)| from the physical pass.
SpectralField convective_term(const SpectralField& u, double& max_velocity);
// -|k|^2 multiplier.
SpectralField laplacian(const SpectralField& u);

double inner_product(const SpectralField& f, const SpectralField& g);
double l2_norm_sq(const SpectralField& f);
// int |grad u|^2 dx
double gradient_norm_sq(const SpectralField& u);
// max_k |k . uhat(k)| / max_k |k||uhat(k)|, 0 for the zero field.
double divergence_residual(const SpectralField& f);

// sup_x sum_{i,j} |d_j u_i(x)| on the field's own grid.
double gradient_sup_norm(const SpectralField& u);
// Pointwise gradient tensor, entry (i*dim + j) holds d_j u_i.
std::vector<PhysicalField> gradient_physical(const SpectralField& u);

// Subsample a physical field onto a coarser grid whose n divides the fine n.
PhysicalField restrict_to(const PhysicalField& fine, const TorusGrid& coarse);

// Fraction of energy carried by modes with max_i |k_i| above half the
// dealiasing cutoff; a resolution diagnostic.
double tail_energy_fraction(const SpectralField& u);

// Add a real trigonometric mode amplitude * direction * cos(k.x) (or sin) to f.
enum class ModePhase { Cos, Sin };
void add_real_mode(SpectralField& f, const Wavevector& k, const Vec3& direction,
                   double amplitude, ModePhase phase);

}  // namespace dissipeuler
