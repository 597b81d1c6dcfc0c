// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random streams. Every stochastic component draws from its own
// substream keyed by (seed, purpose, indices), so adding or removing draws in
// one component never shifts the sequence seen by another. Distributions are
// implemented here instead of <random> because the standard leaves
// normal/uniform_int sequences implementation-defined and runs must be
// bit-reproducible.
#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace mmfl {

enum class StreamId : std::uint64_t {
  kDistances = 1,
  kShadowing,
  kChannels,
  kPartition,
  kPlacement,
  kDownlinkNoise,
  kUplinkNoise,
  kMinibatch,
  kDataset,
  kDataSplit,
  kProbe,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Derives an independent substream for (seed, purpose, indices).
  static Rng stream(std::uint64_t seed, StreamId id, std::uint64_t a = 0,
                    std::uint64_t b = 0, std::uint64_t c = 0);

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1), 53-bit resolution.
  double real01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a log() argument.
  double real01_open() {
    return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * real01(); }

  /// Standard normal via Box-Muller (pairs cached).
  double normal();

  /// Circularly-symmetric standard complex Gaussian CN(0, 1):
  /// real and imaginary parts are independent N(0, 1/2).
  std::complex<double> cnormal() {
    constexpr double kHalfPow = 0.70710678118654752440;  // 1/sqrt(2)
    const double re = normal();
    const double im = normal();
    return {re * kHalfPow, im * kHalfPow};
  }

  /// Unbiased uniform integer in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates shuffle with this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mmfl
