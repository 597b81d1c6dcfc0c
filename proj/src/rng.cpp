// SPDX-License-Identifier: Apache-2.0
#include "mmfl/rng.hpp"

#include <cmath>
#include <limits>

namespace mmfl {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng Rng::stream(std::uint64_t seed, StreamId id, std::uint64_t a,
                std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = splitmix(seed);
  s = splitmix(s ^ static_cast<std::uint64_t>(id));
  s = splitmix(s ^ a);
  s = splitmix(s ^ b);
  s = splitmix(s ^ c);
  return Rng(s);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = real01_open();
  const double u2 = real01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 6.283185307179586476925286766559 * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x = gen_();
  while (x >= limit) x = gen_();
  return x % n;
}

}  // namespace mmfl
