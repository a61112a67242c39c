#pragma once

#include <cstdint>
#include <random>
#include <span>

// Seeded helpers with fixed algorithms; std distributions and std::shuffle are
// implementation-defined and would make seeded runs differ across toolchains.
namespace sentinel::util {

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= limit) return r % n;
  }
}

// Uniform in [-bound, bound).
inline double uniform_symmetric(std::mt19937_64& rng, double bound) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * unit - 1.0) * bound;
}

template <typename T>
void shuffle(std::span<T> items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_below(rng, i)]);
  }
}

}  // namespace sentinel::util
