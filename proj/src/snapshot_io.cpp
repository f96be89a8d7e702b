#include "dissipeuler/snapshot_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dissipeuler {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'E', 'F', 'S', 'N', 'A', 'P'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 8);
}

std::uint64_t get_bytes(std::istream& in, int count) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), count);
  if (!in) throw std::runtime_error("snapshot: truncated input");
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_bytes(in, 8)); }

}  // namespace

void write_snapshot(std::ostream& out, const SpectralField& field, double time) {
  const auto& grid = field.grid();
  out.write(kMagic, 8);
  put_u32(out, kSnapshotVersion);
  put_u32(out, static_cast<std::uint32_t>(grid.dim()));
  put_u32(out, static_cast<std::uint32_t>(grid.n()));
  put_u32(out, 0);
  put_f64(out, time);
  for (std::size_t idx = 0; idx < grid.spectral_size(); ++idx) {
    for (int c = 0; c < grid.dim(); ++c) {
      put_f64(out, field.at(c, idx).real());
      put_f64(out, field.at(c, idx).imag());
    }
  }
  if (!out) throw std::runtime_error("snapshot: write failed");
}

void write_snapshot(const std::string& path, const SpectralField& field, double time) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("snapshot: cannot open " + path);
  write_snapshot(out, field, time);
}

Snapshot read_snapshot(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("snapshot: bad magic");
  const auto version = get_bytes(in, 4);
  if (version != kSnapshotVersion) throw std::runtime_error("snapshot: unsupported version");
  const int dim = static_cast<int>(get_bytes(in, 4));
  const int n = static_cast<int>(get_bytes(in, 4));
  get_bytes(in, 4);
  const double time = get_f64(in);
  SpectralField field{TorusGrid(dim, n)};
  for (std::size_t idx = 0; idx < field.grid().spectral_size(); ++idx) {
    for (int c = 0; c < dim; ++c) {
      const double re = get_f64(in);
      const double im = get_f64(in);
      field.at(c, idx) = Complex(re, im);
    }
  }
  return Snapshot{time, std::move(field)};
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("snapshot: cannot open " + path);
  return read_snapshot(in);
}

}  // namespace dissipeuler
