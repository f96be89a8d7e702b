#include "dissipeuler/forcing.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

#include "dissipeuler/parallel.hpp"

namespace dissipeuler {

namespace {

double mode_normalisation(const ForcingMode& mode, int dim) {
  const bool zero = mode.k[0] == 0 && mode.k[1] == 0 && mode.k[2] == 0;
  const double volume = std::pow(kTwoPi, dim);
  return zero ? 1.0 / std::sqrt(volume) : std::sqrt(2.0 / volume);
}

}  // namespace

ForcingOperator::ForcingOperator(int dim, std::vector<ForcingMode> modes) : dim_(dim), modes_(std::move(modes)) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("forcing: dim must be 2 or 3");
  if (modes_.empty()) throw std::invalid_argument("forcing: rank must be at least 1");
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    auto& m = modes_[i];
    const std::string where = "forcing mode " + std::to_string(i) + ": ";
    if (!(m.sigma >= 0.0) || !std::isfinite(m.sigma)) throw std::invalid_argument(where + "sigma must be >= 0");
    if (dim == 2 && m.k[2] != 0) throw std::invalid_argument(where + "k has a third component on a 2D torus");
    double norm = 0.0;
    for (int d = 0; d < dim; ++d) norm += m.direction[d] * m.direction[d];
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::invalid_argument(where + "direction must be non-zero");
    double kdot = 0.0;
    double knorm = 0.0;
    for (int d = 0; d < dim; ++d) {
      m.direction[d] /= norm;
      kdot += m.k[d] * m.direction[d];
      knorm += static_cast<double>(m.k[d]) * m.k[d];
    }
    if (std::abs(kdot) > 1e-12 * std::sqrt(knorm)) throw std::invalid_argument(where + "direction must be orthogonal to k");
    const bool zero = knorm == 0.0;
    if (zero && m.phase == ModePhase::Sin) throw std::invalid_argument(where + "sin phase with k = 0 is the zero mode");
  }
}

ForcingOperator ForcingOperator::none(int dim) {
  ForcingMode m;
  m.k = {1, 0, 0};
  m.direction = {0.0, 1.0, 0.0};
  m.sigma = 0.0;
  return ForcingOperator(dim, {m});
}

ForcingOperator ForcingOperator::scaled(double factor) const {
  auto modes = modes_;
  for (auto& m : modes) m.sigma *= factor;
  return ForcingOperator(dim_, std::move(modes));
}

double hs_norm_sq(const ForcingOperator& phi) {
  double sum = 0.0;
  for (const auto& m : phi.modes()) sum += m.sigma * m.sigma;
  return sum;
}

SpectralField mode_field(const ForcingMode& mode, const TorusGrid& grid) {
  // directions are taken as unit vectors whether or not they came through ForcingOperator
  double norm = 0.0;
  for (int d = 0; d < grid.dim(); ++d) norm += mode.direction[d] * mode.direction[d];
  if (norm == 0.0) throw std::invalid_argument("mode_field: direction must be non-zero");
  Vec3 dir = mode.direction;
  for (auto& x : dir) x /= std::sqrt(norm);
  SpectralField f(grid);
  add_real_mode(f, mode.k, dir, mode.sigma * mode_normalisation(mode, grid.dim()), mode.phase);
  return f;
}

ForcingOnGrid::ForcingOnGrid(const ForcingOperator& phi, const TorusGrid& grid) : grid_(grid) {
  if (phi.dim() != grid.dim()) throw std::invalid_argument("forcing: dimension does not match the grid");
  for (const auto& m : phi.modes()) {
    images_.push_back(mode_field(m, grid));
    std::vector<std::size_t> support;
    for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
      bool nonzero = false;
      for (int c = 0; c < grid.dim(); ++c) nonzero = nonzero || images_.back().at(c, idx) != Complex(0.0);
      if (nonzero) support.push_back(idx);
    }
    support_.push_back(std::move(support));
  }
}

void ForcingOnGrid::add_noise(SpectralField& u, std::span<const double> increments) const {
  if (increments.size() != images_.size()) throw std::invalid_argument("forcing: increment count does not match rank");
  for (std::size_t k = 0; k < images_.size(); ++k) {
    if (increments[k] == 0.0) continue;
    for (std::size_t idx : support_[k])
      for (int c = 0; c < grid_.dim(); ++c) u.at(c, idx) += increments[k] * images_[k].at(c, idx);
  }
}

void ForcingOnGrid::project(const SpectralField& u, std::span<double> out) const {
  for (std::size_t k = 0; k < images_.size(); ++k) {
    double sum = 0.0;
    for (std::size_t idx : support_[k]) {
      double s = 0.0;
      for (int c = 0; c < grid_.dim(); ++c) {
        const Complex a = u.at(c, idx);
        const Complex b = images_[k].at(c, idx);
        s += a.real() * b.real() + a.imag() * b.imag();
      }
      sum += grid_.mode_weight(idx) * s;
    }
    out[k] = grid_.volume() * sum;
  }
}

SpectralField apply_noise(const ForcingOperator& phi, std::span<const double> increments, const TorusGrid& grid) {
  SpectralField u(grid);
  ForcingOnGrid(phi, grid).add_noise(u, increments);
  return u;
}

double wiener_increment(RngKey key, std::uint32_t mode, std::uint64_t step, int level, double dt_base) {
  if (level == 0) return std::sqrt(dt_base) * keyed_normal(key, step, mode, stream::kWiener);
  const std::uint64_t parent_step = step / 2;
  const double parent = wiener_increment(key, mode, parent_step, level - 1, dt_base);
  const double parent_dt = dt_base / static_cast<double>(std::uint64_t{1} << (level - 1));
  const double first = 0.5 * parent + 0.5 * std::sqrt(parent_dt) *
                                          keyed_normal(key, parent_step, mode, static_cast<std::uint32_t>(level));
  return (step % 2 == 0) ? first : parent - first;
}

WienerPath::WienerPath(RngKey key, std::size_t modes, double dt_base, int level, std::uint64_t step_begin,
                       std::vector<double> increments)
    : key_(key), modes_(modes), dt_base_(dt_base), level_(level), step_begin_(step_begin),
      increments_(std::move(increments)) {
  if (!(dt_base > 0.0)) throw std::invalid_argument("wiener path: dt must be positive");
  if (modes == 0 || increments_.size() % modes != 0) throw std::invalid_argument("wiener path: bad increment layout");
}

double WienerPath::dt() const { return dt_base_ / static_cast<double>(std::uint64_t{1} << level_); }

std::span<const double> WienerPath::increments(std::size_t local_step) const {
  return {increments_.data() + local_step * modes_, modes_};
}

double WienerPath::beta(std::size_t mode, std::size_t local_steps) const {
  if (local_steps > steps()) throw std::out_of_range("wiener path: time beyond horizon");
  double b = 0.0;
  for (std::size_t n = 0; n < local_steps; ++n) b += increment(n, mode);
  return b;
}

WienerPath sample_increments(RngKey key, std::size_t modes, double dt_base, int level, std::uint64_t step_begin,
                             std::uint64_t step_end, int threads) {
  if (!(dt_base > 0.0)) throw std::invalid_argument("wiener path: dt must be positive");
  if (step_end < step_begin) throw std::invalid_argument("wiener path: empty step range");
  if (modes > 0xFFFF) throw std::invalid_argument("wiener path: too many modes");
  const std::size_t steps = static_cast<std::size_t>(step_end - step_begin);
  std::vector<double> inc(steps * modes);
  parallel_for(steps, threads, [&](std::size_t n) {
    for (std::size_t k = 0; k < modes; ++k)
      inc[n * modes + k] = wiener_increment(key, static_cast<std::uint32_t>(k), step_begin + n, level, dt_base);
  });
  return WienerPath(key, modes, dt_base, level, step_begin, std::move(inc));
}

double u0_norm(const WienerPath& path, std::size_t local_steps) {
  double sum = 0.0;
  for (std::size_t k = 0; k < path.modes(); ++k) {
    const double b = path.beta(k, local_steps);
    const double index = static_cast<double>(k + 1);
    sum += b * b / (index * index);
  }
  return std::sqrt(sum);
}

void write_path_csv(std::ostream& out, const WienerPath& path) {
  out << "path_id,k,n,dW\n";
  char buf[128];
  for (std::size_t n = 0; n < path.steps(); ++n) {
    for (std::size_t k = 0; k < path.modes(); ++k) {
      std::snprintf(buf, sizeof buf, "%llu,%zu,%llu,%.17g\n", static_cast<unsigned long long>(path.key().path_id),
                    k + 1, static_cast<unsigned long long>(path.step_begin() + n), path.increment(n, k));
      out << buf;
    }
  }
}

}  // namespace dissipeuler
