#pragma once

// Named random sub-streams derived from one root seed, so each stage can be
// re-run on its own and still draw the same numbers.

#include <cstdint>
#include <random>
#include <vector>

namespace nnsb {

enum class Stream : std::uint32_t { data = 1, vae = 2, stage2 = 3, probes = 4, noise_labels = 5 };

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream stream, std::uint32_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), sub};
  return std::mt19937_64(seq);
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

}  // namespace nnsb
