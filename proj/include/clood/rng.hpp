#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace clood {

// SplitMix64 finalizer. Used only for deriving seeds, never as a stream.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, for turning a stream name into a derivation tag at compile time.
constexpr std::uint64_t tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Child seed for a named (and optionally indexed) substream. Seeds form a
// tree: run seed -> module seed -> per-item seed.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag_value,
                                    std::uint64_t index = 0) {
  return mix64(mix64(parent ^ mix64(tag_value)) + index);
}

// Portable random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; every conversion to floats or
// bounded integers is done here rather than through <random> distributions,
// whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Unbiased (rejection on the top zone).
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates with a portable index draw.
  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace clood
