#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace summcorr {

// Philox4x32-10 counter-based generator. The 128-bit counter is split as
// (draw counter, stream index), so streams for distinct (key, index) pairs
// are disjoint by construction; replicates are reproducible in any execution
// order and across thread counts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_index = 0) {
    const std::uint64_t k = mix(seed);
    key_[0] = static_cast<std::uint32_t>(k);
    key_[1] = static_cast<std::uint32_t>(k >> 32);
    counter_[0] = 0;
    counter_[1] = 0;
    counter_[2] = static_cast<std::uint32_t>(stream_index);
    counter_[3] = static_cast<std::uint32_t>(stream_index >> 32);
  }

  // splitmix64 finalizer; used for deriving seeds, not for the draw stream.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t stream_seed(std::uint64_t base_seed,
                                   std::uint64_t stream_index) {
    return mix(mix(base_seed) + stream_index);
  }

  static Rng stream(std::uint64_t base_seed, std::uint64_t stream_index) {
    return Rng(base_seed, stream_index);
  }

  // One keyed 10-round block: 128-bit counter -> 4 x 32-bit words.
  static std::array<std::uint32_t, 4> philox_block(
      std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
      const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }

  std::uint64_t next_u64() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const auto out = philox_block(counter_, key_);
    if (++counter_[0] == 0) ++counter_[1];  // 2^64 draws per stream
    spare_ = static_cast<std::uint64_t>(out[2]) |
             (static_cast<std::uint64_t>(out[3]) << 32);
    have_spare_ = true;
    return static_cast<std::uint64_t>(out[0]) |
           (static_cast<std::uint64_t>(out[1]) << 32);
  }

  // [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Inclusive bounds. Modulo bias is O(range / 2^64), irrelevant here.
  int uniform_int(int lo, int hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % range);
  }

  // Marsaglia polar method: two independent N(0,1) draws, no trig calls.
  void normal_pair(double& z0, double& z1) {
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    z0 = u * f;
    z1 = v * f;
  }

 private:
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 2> key_;
  std::uint64_t spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace summcorr
