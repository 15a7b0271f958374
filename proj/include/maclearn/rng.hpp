#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "maclearn/errors.hpp"

namespace maclearn {

// SplitMix64 finalizer, used to derive independent stream seeds from a root
// seed plus a component tag.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag) {
  return splitmix64(splitmix64(root) ^ splitmix64(tag));
}

// Seeded random stream. The engine (mt19937_64) has a standard-mandated
// output sequence; the distribution mappings are implemented here so results
// do not depend on the standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ContractError("uniform_int: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Exponential inter-arrival gap with the given rate.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Sample an index from a discrete distribution by CDF inversion.
  int sample_discrete(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace maclearn
