#include "dissipeuler/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace dissipeuler {

namespace {

// FFTW planning is not thread-safe; execution with new-array calls is.
struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

const FftPlans& plans_for(const TorusGrid& grid) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, FftPlans> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_pair(grid.dim(), grid.n());
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  std::vector<int> dims(grid.dim(), grid.n());
  std::vector<double> real(grid.physical_size());
  std::vector<Complex> spec(grid.spectral_size());
  auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  FftPlans plans;
  plans.forward = fftw_plan_dft_r2c(grid.dim(), dims.data(), real.data(), cplx, flags);
  plans.backward = fftw_plan_dft_c2r(grid.dim(), dims.data(), cplx, real.data(), flags);
  if (!plans.forward || !plans.backward) throw std::runtime_error("FFTW planning failed");
  return cache.emplace(key, plans).first->second;
}

void forward_scalar(const TorusGrid& grid, std::span<const double> in, std::span<Complex> out) {
  const auto& plans = plans_for(grid);
  // r2c does not modify its input for out-of-place transforms.
  fftw_execute_dft_r2c(plans.forward, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
  const double scale = 1.0 / static_cast<double>(grid.physical_size());
  for (auto& c : out) c *= scale;
}

void backward_scalar(const TorusGrid& grid, std::span<const Complex> in, std::span<double> out,
                     std::vector<Complex>& scratch) {
  const auto& plans = plans_for(grid);
  scratch.assign(in.begin(), in.end());
  fftw_execute_dft_c2r(plans.backward, reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
}

int wrap(int i, int n) { return i < n / 2 ? i : i - n; }

bool in_band(const TorusGrid& grid, std::size_t idx) {
  const auto k = grid.wavevector(idx);
  const int cut = grid.dealias_cutoff();
  for (int d = 0; d < grid.dim(); ++d)
    if (std::abs(k[d]) > cut) return false;
  return true;
}

void require_same_grid(const SpectralField& a, const SpectralField& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("spectral fields live on different grids");
}

}  // namespace

TorusGrid::TorusGrid(int dim, int n) : dim_(dim), n_(n) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("grid dim must be 2 or 3, got " + std::to_string(dim));
  if (n < 8 || (n & (n - 1)) != 0)
    throw std::invalid_argument("grid n must be a power of two >= 8, got " + std::to_string(n));
  physical_size_ = 1;
  for (int d = 0; d < dim; ++d) physical_size_ *= static_cast<std::size_t>(n);
  spectral_size_ = physical_size_ / static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
}

double TorusGrid::volume() const { return std::pow(kTwoPi, dim_); }

Wavevector TorusGrid::wavevector(std::size_t idx) const {
  const std::size_t half = static_cast<std::size_t>(n_ / 2 + 1);
  Wavevector k{0, 0, 0};
  k[dim_ - 1] = static_cast<int>(idx % half);
  idx /= half;
  for (int d = dim_ - 2; d >= 0; --d) {
    k[d] = wrap(static_cast<int>(idx % static_cast<std::size_t>(n_)), n_);
    idx /= static_cast<std::size_t>(n_);
  }
  return k;
}

Vec3 TorusGrid::derivative_wavevector(std::size_t idx) const {
  const auto k = wavevector(idx);
  Vec3 out{0.0, 0.0, 0.0};
  for (int d = 0; d < dim_; ++d) out[d] = std::abs(k[d]) == n_ / 2 ? 0.0 : static_cast<double>(k[d]);
  return out;
}

double TorusGrid::mode_weight(std::size_t idx) const {
  const int last = static_cast<int>(idx % static_cast<std::size_t>(n_ / 2 + 1));
  return (last == 0 || last == n_ / 2) ? 1.0 : 2.0;
}

std::optional<std::size_t> TorusGrid::index_of(const Wavevector& k) const {
  const int last = k[dim_ - 1];
  if (last < 0 || last > n_ / 2) return std::nullopt;
  std::size_t idx = 0;
  for (int d = 0; d < dim_ - 1; ++d) {
    if (k[d] < -n_ / 2 || k[d] >= n_ / 2) return std::nullopt;
    const int i = k[d] < 0 ? k[d] + n_ : k[d];
    idx = idx * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i);
  }
  return idx * static_cast<std::size_t>(n_ / 2 + 1) + static_cast<std::size_t>(last);
}

Vec3 TorusGrid::point(std::size_t p) const {
  Vec3 x{0.0, 0.0, 0.0};
  for (int d = dim_ - 1; d >= 0; --d) {
    x[d] = spacing() * static_cast<double>(p % static_cast<std::size_t>(n_));
    p /= static_cast<std::size_t>(n_);
  }
  return x;
}

PhysicalField::PhysicalField(TorusGrid grid)
    : grid_(grid), data_(grid.physical_size() * static_cast<std::size_t>(grid.dim()), 0.0) {}

std::span<double> PhysicalField::component(int c) {
  return {data_.data() + c * grid_.physical_size(), grid_.physical_size()};
}

std::span<const double> PhysicalField::component(int c) const {
  return {data_.data() + c * grid_.physical_size(), grid_.physical_size()};
}

double PhysicalField::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double PhysicalField::max_norm() const {
  double m = 0.0;
  for (std::size_t p = 0; p < grid_.physical_size(); ++p) {
    double s = 0.0;
    for (int c = 0; c < grid_.dim(); ++c) s += at(c, p) * at(c, p);
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

SpectralField::SpectralField(TorusGrid grid)
    : grid_(grid), data_(grid.spectral_size() * static_cast<std::size_t>(grid.dim())) {}

std::span<Complex> SpectralField::component(int c) {
  return {data_.data() + c * grid_.spectral_size(), grid_.spectral_size()};
}

std::span<const Complex> SpectralField::component(int c) const {
  return {data_.data() + c * grid_.spectral_size(), grid_.spectral_size()};
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double s) {
  for (auto& c : data_) c *= s;
  return *this;
}

SpectralField& SpectralField::axpy(double s, const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
SpectralField operator*(double s, SpectralField a) { return a *= s; }

SpectralField to_spectral(const PhysicalField& f) {
  SpectralField out(f.grid());
  for (int c = 0; c < f.grid().dim(); ++c) forward_scalar(f.grid(), f.component(c), out.component(c));
  return out;
}

PhysicalField to_physical(const SpectralField& f) {
  PhysicalField out(f.grid());
  std::vector<Complex> scratch;
  for (int c = 0; c < f.grid().dim(); ++c) backward_scalar(f.grid(), f.component(c), out.component(c), scratch);
  return out;
}

SpectralField leray_project(const SpectralField& f) {
  const auto& grid = f.grid();
  const int dim = grid.dim();
  SpectralField out = f;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    double k2 = 0.0;
    for (int d = 0; d < dim; ++d) k2 += k[d] * k[d];
    if (k2 == 0.0) continue;
    Complex kdotu = 0.0;
    for (int d = 0; d < dim; ++d) kdotu += k[d] * f.at(d, idx);
    for (int d = 0; d < dim; ++d) out.at(d, idx) -= k[d] * kdotu / k2;
  }
  return out;
}

SpectralField dealias(const SpectralField& f) {
  SpectralField out = f;
  const auto& grid = f.grid();
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    if (in_band(grid, idx)) continue;
    for (int c = 0; c < grid.dim(); ++c) out.at(c, idx) = 0.0;
  }
  return out;
}

std::vector<SpectralField> gradient(const SpectralField& u) {
  const auto& grid = u.grid();
  const int dim = grid.dim();
  std::vector<SpectralField> grad(dim, SpectralField(grid));
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i < dim; ++i) grad[j].at(i, idx) = Complex(0.0, k[j]) * u.at(i, idx);
  }
  return grad;
}

SpectralField convective_term(const SpectralField& u, double& max_velocity) {
  const auto& grid = u.grid();
  const int dim = grid.dim();
  const PhysicalField phys = to_physical(dealias(u));
  max_velocity = phys.max_norm();

  std::vector<double> product(grid.physical_size());
  std::vector<Complex> product_hat(grid.spectral_size());
  SpectralField div(grid);
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      const auto ui = phys.component(i);
      const auto uj = phys.component(j);
      for (std::size_t p = 0; p < grid.physical_size(); ++p) product[p] = ui[p] * uj[p];
      forward_scalar(grid, product, product_hat);
      // -d_j (u_i u_j) contributes to component i, and -d_i (u_i u_j) to component j.
      for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
        const Vec3 k = grid.derivative_wavevector(idx);
        div.at(i, idx) -= Complex(0.0, k[j]) * product_hat[idx];
        if (j != i) div.at(j, idx) -= Complex(0.0, k[i]) * product_hat[idx];
      }
    }
  }
  return leray_project(dealias(div));
}

SpectralField convective_term(const SpectralField& u) {
  double unused = 0.0;
  return convective_term(u, unused);
}

SpectralField laplacian(const SpectralField& u) {
  SpectralField out = u;
  const auto& grid = u.grid();
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    for (int c = 0; c < grid.dim(); ++c) out.at(c, idx) *= -k2;
  }
  return out;
}

double inner_product(const SpectralField& f, const SpectralField& g) {
  require_same_grid(f, g);
  const auto& grid = f.grid();
  double sum = 0.0;
  for (int c = 0; c < grid.dim(); ++c) {
    const auto a = f.component(c);
    const auto b = g.component(c);
    for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx)
      sum += grid.mode_weight(idx) * (a[idx].real() * b[idx].real() + a[idx].imag() * b[idx].imag());
  }
  return grid.volume() * sum;
}

double l2_norm_sq(const SpectralField& f) { return inner_product(f, f); }

double gradient_norm_sq(const SpectralField& u) {
  const auto& grid = u.grid();
  double sum = 0.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    for (int c = 0; c < grid.dim(); ++c) sum += grid.mode_weight(idx) * k2 * std::norm(u.at(c, idx));
  }
  return grid.volume() * sum;
}

double divergence_residual(const SpectralField& f) {
  const auto& grid = f.grid();
  double worst = 0.0;
  double scale = 0.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const Vec3 k = grid.derivative_wavevector(idx);
    Complex kdotu = 0.0;
    double unorm = 0.0;
    for (int d = 0; d < grid.dim(); ++d) {
      kdotu += k[d] * f.at(d, idx);
      unorm += std::norm(f.at(d, idx));
    }
    const double knorm = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
    worst = std::max(worst, std::abs(kdotu));
    scale = std::max(scale, knorm * std::sqrt(unorm));
  }
  return scale == 0.0 ? 0.0 : worst / scale;
}

std::vector<PhysicalField> gradient_physical(const SpectralField& u) {
  const int dim = u.grid().dim();
  const auto grad = gradient(u);
  std::vector<PhysicalField> out;
  out.reserve(static_cast<std::size_t>(dim * dim));
  std::vector<PhysicalField> per_direction;
  for (int j = 0; j < dim; ++j) per_direction.push_back(to_physical(grad[j]));
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      PhysicalField entry(u.grid());
      auto src = per_direction[j].component(i);
      std::copy(src.begin(), src.end(), entry.component(0).begin());
      out.push_back(std::move(entry));
    }
  }
  return out;
}

double gradient_sup_norm(const SpectralField& u) {
  const auto& grid = u.grid();
  const int dim = grid.dim();
  const auto grad = gradient(u);
  std::vector<double> total(grid.physical_size(), 0.0);
  for (int j = 0; j < dim; ++j) {
    const auto phys = to_physical(grad[j]);
    for (int i = 0; i < dim; ++i) {
      const auto comp = phys.component(i);
      for (std::size_t p = 0; p < grid.physical_size(); ++p) total[p] += std::abs(comp[p]);
    }
  }
  return *std::max_element(total.begin(), total.end());
}

PhysicalField restrict_to(const PhysicalField& fine, const TorusGrid& coarse) {
  const auto& fg = fine.grid();
  if (fg.dim() != coarse.dim() || fg.n() % coarse.n() != 0)
    throw std::invalid_argument("restrict_to: coarse grid must divide the fine grid");
  const std::size_t stride = static_cast<std::size_t>(fg.n() / coarse.n());
  const std::size_t nf = static_cast<std::size_t>(fg.n());
  const std::size_t nc = static_cast<std::size_t>(coarse.n());
  PhysicalField out(coarse);
  for (std::size_t p = 0; p < coarse.physical_size(); ++p) {
    std::size_t rem = p;
    std::size_t fine_index = 0;
    std::size_t mult = 1;
    for (int d = coarse.dim() - 1; d >= 0; --d) {
      fine_index += (rem % nc) * stride * mult;
      rem /= nc;
      mult *= nf;
    }
    for (int c = 0; c < coarse.dim(); ++c) out.at(c, p) = fine.at(c, fine_index);
  }
  return out;
}

double tail_energy_fraction(const SpectralField& u) {
  const auto& grid = u.grid();
  const int threshold = grid.dealias_cutoff() / 2;
  double tail = 0.0;
  double total = 0.0;
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    const auto k = grid.wavevector(idx);
    int kmax = 0;
    for (int d = 0; d < grid.dim(); ++d) kmax = std::max(kmax, std::abs(k[d]));
    double e = 0.0;
    for (int c = 0; c < grid.dim(); ++c) e += grid.mode_weight(idx) * std::norm(u.at(c, idx));
    total += e;
    if (kmax > threshold) tail += e;
  }
  return total == 0.0 ? 0.0 : tail / total;
}

void add_real_mode(SpectralField& f, const Wavevector& k, const Vec3& direction, double amplitude,
                   ModePhase phase) {
  const auto& grid = f.grid();
  for (int d = 0; d < grid.dim(); ++d)
    if (std::abs(k[d]) >= grid.n() / 2)
      throw std::invalid_argument("mode wavevector exceeds the grid's Nyquist limit");
  const bool zero = std::all_of(k.begin(), k.begin() + grid.dim(), [](int v) { return v == 0; });
  if (zero) {
    if (phase == ModePhase::Sin) return;
    const auto idx = *grid.index_of(k);
    for (int c = 0; c < grid.dim(); ++c) f.at(c, idx) += amplitude * direction[c];
    return;
  }
  // cos(k.x) = (e^{ikx} + e^{-ikx})/2, sin(k.x) = (e^{ikx} - e^{-ikx})/(2i).
  const Complex plus = phase == ModePhase::Cos ? Complex(0.5 * amplitude, 0.0) : Complex(0.0, -0.5 * amplitude);
  Wavevector minus_k{-k[0], -k[1], -k[2]};
  if (auto idx = grid.index_of(k)) {
    for (int c = 0; c < grid.dim(); ++c) f.at(c, *idx) += plus * direction[c];
  }
  if (auto idx = grid.index_of(minus_k)) {
    for (int c = 0; c < grid.dim(); ++c) f.at(c, *idx) += std::conj(plus) * direction[c];
  }
}

}  // namespace dissipeuler
