#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace factorphase {

// online mean/variance accumulator (Welford)
struct RunningStat {
  long long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d1 = x - mean;
    mean += d1 / static_cast<double>(n);
    m2 += d1 * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double sd() const { return std::sqrt(variance()); }
  double se() const { return n > 0 ? sd() / std::sqrt(static_cast<double>(n)) : 0.0; }

  void merge(const RunningStat& o) {
    if (o.n == 0) return;
    if (n == 0) { *this = o; return; }
    const double d = o.mean - mean;
    const double nn = static_cast<double>(n + o.n);
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / nn;
    mean += d * static_cast<double>(o.n) / nn;
    n += o.n;
  }
};

inline double log_sum_exp(const std::vector<double>& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// total variation distance between two distributions over the same index set
inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

// two-sample Kolmogorov-Smirnov statistic, sup |F1 - F2|
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// regularized lower incomplete gamma, series + continued fraction
inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int it = 0; it < 500; ++it) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Lentz continued fraction for Q(a,x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int it = 1; it < 500; ++it) {
    const double an = -it * (it - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

// upper tail of the chi-square distribution with df degrees of freedom
inline double chi_square_sf(double stat, double df) {
  return 1.0 - gamma_p(df / 2.0, stat / 2.0);
}

inline double poisson_pmf(long k, double mean) {
  if (k < 0) return 0.0;
  return std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
}

}  // namespace factorphase
