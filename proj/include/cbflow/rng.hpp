#pragma once
// Counter-free splitmix64 random stream with the exact draw discipline the
// simulator's determinism contract relies on:
//   - uniform01/uniform_pos consume one 64-bit word each,
//   - gaussian consumes exactly two words (Box-Muller, no caching),
//   - poisson consumes a data-dependent but stream-deterministic number.
// Per-path substreams are seeded by one splitmix64 output of
// (master_seed XOR path_index), so any path can be regenerated in isolation
// and in any language that reproduces the published constants.

#include <cstdint>

namespace cbflow::rng {

struct Stream {
  std::uint64_t state = 0;

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // (0, 1]; safe under log()
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double gaussian();
  long long poisson(double mean);
};

inline Stream path_stream(std::uint64_t master_seed, std::uint64_t path_index) {
  Stream bootstrap{master_seed ^ path_index};
  return Stream{bootstrap.next_u64()};
}

}  // namespace cbflow::rng
