#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace flexor {

// SplitMix64 step. Used to derive independent seeds for parallel streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic stream seed for (base, a, b), e.g. (seed, replicate, retry).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t s = base;
  std::uint64_t x = splitmix64(s);
  s ^= (a + 0x9E3779B97F4A7C15ULL) * 0xD1342543DE82EF95ULL;
  x ^= splitmix64(s);
  s ^= (b + 0x2545F4914F6CDD1DULL) * 0x9E6C63D0876A9A47ULL;
  return x ^ splitmix64(s);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(base, a, b));
}

// Draw from the symmetric Dirichlet(1, ..., 1) on the k-simplex.
inline Eigen::VectorXd dirichlet_uniform(Rng& rng, int k) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd v(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    v[i] = expo(rng);
    total += v[i];
  }
  return v / total;
}

}  // namespace flexor
