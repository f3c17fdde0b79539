#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace segshuffle {

// A protocol or optimizer configuration that cannot satisfy its privacy
// constraints (e.g. no blanket rate below the cap makes a level feasible).
class infeasible_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset ingestion failures: missing files, malformed lines, not enough
// users to sample from.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Randomness. One root seed per run; every consumer derives its own stream
// with derive_seed so results do not depend on iteration order or scheduling.
// ---------------------------------------------------------------------------

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return mix64(root + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(root, a), b);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Unbiased draw from [0, n) (Lemire's multiply-shift rejection).
inline std::uint64_t uniform_below(std::mt19937_64& g, std::uint64_t n) {
  std::uint64_t x = g();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    std::uint64_t t = (-n) % n;
    while (lo < t) {
      x = g();
      m = static_cast<__uint128_t>(x) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

// Compensated (Neumaier) accumulator; keeps divergence sums accurate over
// millions of terms spanning a wide dynamic range.
struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + comp; }
};

// log(n!) for n in [0, max_n].
inline std::vector<double> log_factorial_table(std::int64_t max_n) {
  std::vector<double> lf(static_cast<std::size_t>(max_n) + 1);
  lf[0] = 0.0;
  for (std::int64_t i = 1; i <= max_n; ++i) {
    lf[static_cast<std::size_t>(i)] = std::lgamma(static_cast<double>(i) + 1.0);
  }
  return lf;
}

inline double log_choose(const std::vector<double>& lf, std::int64_t n,
                         std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return lf[static_cast<std::size_t>(n)] - lf[static_cast<std::size_t>(k)] -
         lf[static_cast<std::size_t>(n - k)];
}

}  // namespace segshuffle
