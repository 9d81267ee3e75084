#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace visnli {

std::uint64_t splitmix64(std::uint64_t x);

// Derives a child seed from a parent seed and a string tag (instance id, slot...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

// Seeded stream with a portable bounded draw, so tie-breaks and shuffles are
// identical across standard library implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  // Uniform real in [0, 1).
  double uniform_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace visnli
