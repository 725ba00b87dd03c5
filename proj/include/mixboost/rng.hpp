// Deterministic random streams.
//
// The engine is std::mt19937_64 (bit-exact by the standard), but every
// distribution is coded here explicitly: the standard library's distribution
// objects are not required to produce identical sequences across
// implementations, and experiment directories must be byte-reproducible.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

#include "mixboost/common.hpp"

namespace mixboost {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named substream derivation: one root seed fans out to independent,
// reproducible streams ("init", "aug", "mask", ...).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = splitmix64(root ^ 0x6d697862737460a1ULL);
  for (unsigned char c : tag) h = splitmix64(h ^ c);
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root ^ 0x9d3f7a11c25b06e5ULL) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to remove modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw NumericError("uniform_int: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal, Box-Muller (cosine branch; no cached second value so the
  // draw count per call is fixed).
  double normal() {
    double u1 = std::max(uniform(), 0x1.0p-53);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(alpha, 1), Marsaglia-Tsang squeeze; alpha < 1 via the boost
  // G(a) = G(a+1) * U^{1/a}.
  double gamma(double alpha) {
    if (!(alpha > 0)) throw NumericError("gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = std::max(uniform(), 0x1.0p-53);
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = std::max(uniform(), 0x1.0p-53);
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    double s = x + y;
    return s > 0 ? x / s : 0.5;
  }

  // Exact Poisson by chunked Knuth products (chunking keeps exp(-lambda)
  // away from underflow for the shot-noise rates used here).
  std::uint64_t poisson(double lambda) {
    if (!(lambda >= 0)) throw NumericError("poisson: lambda must be nonnegative");
    std::uint64_t total = 0;
    while (lambda > 0) {
      double chunk = std::min(lambda, 25.0);
      lambda -= chunk;
      double limit = std::exp(-chunk);
      double prod = 1.0;
      std::uint64_t k = 0;
      for (;;) {
        prod *= uniform();
        if (prod <= limit) break;
        ++k;
      }
      total += k;
    }
    return total;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

  // k distinct values from [0, n), uniform without replacement
  // (partial Fisher-Yates).
  std::vector<std::size_t> choose(std::size_t n, std::size_t k) {
    if (k > n) throw NumericError("choose: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + uniform_int(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mixboost
