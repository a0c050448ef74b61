#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mpcache/errors.hpp"

namespace mpcache {

// splitmix64-style mixing used to derive independent child seeds from a
// master seed and a stream tag. Every stochastic component draws from its own
// tagged stream so that adding draws in one place never shifts another.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic random source. Wraps std::mt19937_64 but performs all value
// mapping (doubles, bounded ints, pmf sampling) with explicit arithmetic, so
// streams are byte-for-byte reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t tag) : gen_(mix_seed(seed, tag)) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [lo, hi] via rejection sampling.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ParameterError("uniform_int: empty range");
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(gen_());  // full 64-bit span
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % range);
  }

  // Index draw from an unnormalized pmf by inverse CDF. Total mass must be
  // positive; trailing round-off is absorbed by the last positive entry.
  int sample_pmf(const std::vector<double>& pmf) {
    double total = 0.0;
    int last_pos = -1;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      if (pmf[i] < 0.0) throw DataError("sample_pmf: negative mass");
      total += pmf[i];
      if (pmf[i] > 0.0) last_pos = static_cast<int>(i);
    }
    if (last_pos < 0) throw DataError("sample_pmf: zero total mass");
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      acc += pmf[i];
      if (u < acc) return static_cast<int>(i);
    }
    return last_pos;
  }

  // Fisher-Yates shuffle driven by uniform_int, independent of std::shuffle's
  // unspecified draw order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mpcache
