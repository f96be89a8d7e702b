#include "dissipeuler/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dissipeuler {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> raw_draw(RngKey key, std::uint64_t index, std::uint32_t slot,
                                      std::uint32_t stream) {
  if (index >> 32) throw std::out_of_range("keyed rng: index must fit in 32 bits");
  if (slot > 0xFFFFu || stream > 0xFFFFu) throw std::out_of_range("keyed rng: slot/stream must fit in 16 bits");
  const std::array<std::uint32_t, 4> counter{static_cast<std::uint32_t>(index), (stream << 16) | slot,
                                             static_cast<std::uint32_t>(key.path_id),
                                             static_cast<std::uint32_t>(key.path_id >> 32)};
  const std::array<std::uint32_t, 2> k{static_cast<std::uint32_t>(key.seed),
                                       static_cast<std::uint32_t>(key.seed >> 32)};
  return philox4x32(counter, k);
}

double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

double keyed_uniform(RngKey key, std::uint64_t index, std::uint32_t slot, std::uint32_t stream) {
  const auto r = raw_draw(key, index, slot, stream);
  return to_unit(r[0], r[1]);
}

double keyed_normal(RngKey key, std::uint64_t index, std::uint32_t slot, std::uint32_t stream) {
  const auto r = raw_draw(key, index, slot, stream);
  const double u1 = to_unit(r[0], r[1]);
  const double u2 = to_unit(r[2], r[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace dissipeuler
