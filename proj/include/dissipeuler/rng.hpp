#pragma once

// Counter-based random numbers. Every draw is a pure function of its key, so
// results do not depend on thread count or call order.

#include <array>
#include <cstdint>

namespace dissipeuler {

// Philox4x32-10 (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Streams partition the counter space; keep them distinct per consumer.
namespace stream {
inline constexpr std::uint32_t kWiener = 0;  // levels 1.. are bridge refinements
inline constexpr std::uint32_t kInitial = 0xFFFF;
inline constexpr std::uint32_t kTest = 0xFFFE;
}  // namespace stream

struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
};

// Standard normal draw for (seed, path_id, index, slot, stream).
// index < 2^32, slot < 2^16, stream < 2^16.
double keyed_normal(RngKey key, std::uint64_t index, std::uint32_t slot, std::uint32_t stream);
// Uniform in (0, 1) for the same key layout.
double keyed_uniform(RngKey key, std::uint64_t index, std::uint32_t slot, std::uint32_t stream);

}  // namespace dissipeuler
