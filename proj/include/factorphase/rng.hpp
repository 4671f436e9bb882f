#pragma once

#include <cmath>
#include <cstdint>

namespace factorphase {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ with hand-rolled samplers. std::random distributions are
// implementation-defined, so everything downstream of a seed is produced
// here to keep runs reproducible across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  // independent stream keyed by (seed, stream); used for per-task RNGs
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t x = seed;
    std::uint64_t a = splitmix64(x);
    x = a ^ (0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL);
    return Rng(splitmix64(x));
  }

  std::uint64_t u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform double in [0,1), 53 bits
  double unif() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint64_t unif_int(std::uint64_t n) {
    // Lemire's multiply-shift with rejection
    std::uint64_t x = u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal() {
    // Marsaglia polar method, one value per call (spare discarded)
    for (;;) {
      const double u = 2.0 * unif() - 1.0;
      const double v = 2.0 * unif() - 1.0;
      const double r2 = u * u + v * v;
      if (r2 > 0.0 && r2 < 1.0) return u * std::sqrt(-2.0 * std::log(r2) / r2);
    }
  }

  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 60.0) {
      // Po(a+b) = Po(a) + Po(b); split to keep inversion in a safe range
      const double half = mean / 2;
      return poisson(half) + poisson(mean - half);
    }
    const double L = std::exp(-mean);
    long n = 0;
    double p = unif();
    while (p > L) {
      p *= unif();
      ++n;
    }
    return n;
  }

  bool bernoulli(double p) { return unif() < p; }

  // index sampled from unnormalized non-negative weights
  int discrete(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    double x = unif() * total;
    for (int i = 0; i < n - 1; ++i) {
      x -= w[i];
      if (x < 0.0) return i;
    }
    return n - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace factorphase
