// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>

namespace absd {

/// Small counter-style generator used for per-block substreams. Cheap to
/// construct, so every block can own one derived from (seed, index) and
/// results stay independent of how work is chunked across threads.
class SplitMix64 {
 public:
  using result_type = uint64_t;

  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  /// Substream for `index` under `seed`.
  static SplitMix64 substream(uint64_t seed, uint64_t index) {
    SplitMix64 mix(seed ^ 0x6a09e667f3bcc909ULL);
    uint64_t a = mix();
    SplitMix64 mix2(a + index * 0x9e3779b97f4a7c15ULL);
    return SplitMix64(mix2());
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  uint64_t state_;
};

}  // namespace absd
