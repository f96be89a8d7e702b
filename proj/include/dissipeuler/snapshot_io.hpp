#pragma once

// Binary field snapshots, format version 1 (all integers and doubles little-endian):
//
//   offset  size  content
//   0       8     magic "DSEFSNAP"
//   8       4     u32 format version (1)
//   12      4     u32 dim
//   16      4     u32 n (points per axis)
//   20      4     u32 reserved, 0
//   24      8     f64 time
//   32      ...   coefficients: for each stored wavevector in row-major order of the
//                 half spectrum (last axis 0..n/2), for each component c < dim,
//                 f64 real part then f64 imaginary part.

#include <iosfwd>
#include <string>

#include "dissipeuler/spectral.hpp"

namespace dissipeuler {

struct Snapshot {
  double time = 0.0;
  SpectralField field;
};

inline constexpr unsigned kSnapshotVersion = 1;

void write_snapshot(std::ostream& out, const SpectralField& field, double time);
void write_snapshot(const std::string& path, const SpectralField& field, double time);
Snapshot read_snapshot(std::istream& in);
Snapshot read_snapshot(const std::string& path);

}  // namespace dissipeuler
