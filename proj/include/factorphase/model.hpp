#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "la.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace factorphase {

inline double lambda_xlnx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

struct SpinSet {
  int q = 2;
  std::vector<std::string> labels;

  explicit SpinSet(int q_ = 2) : q(q_) {
    for (int i = 0; i < q; ++i) labels.push_back(std::to_string(i + 1));
  }
};

enum class WeightFamily { Table, Potts, KSpin };

// A weight function Omega^k -> (0,2). Tuples are flattened little-endian:
// position 0 is the least significant digit.
struct WeightFunction {
  int q = 2;
  int k = 2;
  WeightFamily family = WeightFamily::Table;
  std::vector<double> params;  // Potts: {beta}; KSpin: {J, beta}
  std::vector<double> table;   // q^k values, always materialized (q^k <= 4096)

  std::size_t table_size() const {
    std::size_t s = 1;
    for (int i = 0; i < k; ++i) s *= static_cast<std::size_t>(q);
    return s;
  }

  std::size_t flat_index(const std::vector<int>& tau) const {
    std::size_t idx = 0, stride = 1;
    for (int i = 0; i < k; ++i) {
      if (tau[i] < 0 || tau[i] >= q) throw std::out_of_range("spin index out of range");
      idx += static_cast<std::size_t>(tau[i]) * stride;
      stride *= static_cast<std::size_t>(q);
    }
    return idx;
  }

  double operator()(const std::vector<int>& tau) const { return table[flat_index(tau)]; }
};

inline double eval_weight(const WeightFunction& psi, const std::vector<int>& tau) {
  return psi(tau);
}

// spin-set conventions for the k-spin family: index 0 <-> +1, index 1 <-> -1
inline int kspin_sign(int spin_index) { return spin_index == 0 ? 1 : -1; }

inline WeightFunction make_potts_weight(int q, double beta) {
  WeightFunction w;
  w.q = q;
  w.k = 2;
  w.family = WeightFamily::Potts;
  w.params = {beta};
  w.table.assign(static_cast<std::size_t>(q) * q, 1.0);
  for (int s = 0; s < q; ++s) w.table[static_cast<std::size_t>(s) * q + s] = std::exp(-beta);
  return w;
}

inline void make_kspin_weight_into(int k, double J, double beta, WeightFunction& w) {
  w.q = 2;
  w.k = k;
  w.family = WeightFamily::KSpin;
  w.params = {J, beta};
  const double t = std::tanh(J * beta);
  w.table.resize(std::size_t{1} << k);
  for (std::size_t idx = 0; idx < w.table.size(); ++idx) {
    // product of spins = -1 iff an odd number of positions carry index 1
    const int parity = __builtin_popcountll(idx) & 1;
    w.table[idx] = 1.0 + (parity ? -t : t);
  }
}

inline WeightFunction make_kspin_weight(int k, double J, double beta) {
  WeightFunction w;
  make_kspin_weight_into(k, J, beta, w);
  return w;
}

inline WeightFunction make_table_weight(int q, int k, std::vector<double> table) {
  WeightFunction w;
  w.q = q;
  w.k = k;
  w.family = WeightFamily::Table;
  w.table = std::move(table);
  if (w.table.size() != w.table_size()) throw std::invalid_argument("bad table length");
  for (double v : w.table)
    if (!(v > 0.0 && v < 2.0)) throw std::invalid_argument("weight values must lie in (0,2)");
  return w;
}

enum class ModelFamily { Potts, GaussianKSpin, Xorsat, FiniteTable };
enum class SupportKind { Finite, Parametric1d };

// distribution P over weight functions, plus the spin set and arity
struct ModelSpec {
  SpinSet spin_set{2};
  int k = 2;
  ModelFamily family = ModelFamily::Potts;
  SupportKind support_kind = SupportKind::Finite;
  double beta = 1.0;
  // finite support: (probability, atom) pairs
  std::vector<std::pair<double, WeightFunction>> atoms;

  int q() const { return spin_set.q; }

  static ModelSpec potts(int q, double beta) {
    if (q < 2) throw std::invalid_argument("q >= 2 required");
    ModelSpec m;
    m.spin_set = SpinSet(q);
    m.k = 2;
    m.family = ModelFamily::Potts;
    m.support_kind = SupportKind::Finite;
    m.beta = beta;
    m.atoms = {{1.0, make_potts_weight(q, beta)}};
    return m;
  }

  static ModelSpec gaussian_kspin(int k, double beta) {
    ModelSpec m;
    m.spin_set = SpinSet(2);
    m.spin_set.labels = {"+1", "-1"};
    m.k = k;
    m.family = ModelFamily::GaussianKSpin;
    m.support_kind = SupportKind::Parametric1d;
    m.beta = beta;
    return m;
  }

  static ModelSpec xorsat(int k, double beta) {
    ModelSpec m;
    m.spin_set = SpinSet(2);
    m.spin_set.labels = {"+1", "-1"};
    m.k = k;
    m.family = ModelFamily::Xorsat;
    m.support_kind = SupportKind::Finite;
    m.beta = beta;
    m.atoms = {{0.5, make_kspin_weight(k, 1.0, beta)}, {0.5, make_kspin_weight(k, -1.0, beta)}};
    return m;
  }

  static ModelSpec finite_table(int q, int k, std::vector<std::pair<double, WeightFunction>> atoms) {
    ModelSpec m;
    m.spin_set = SpinSet(q);
    m.k = k;
    m.family = ModelFamily::FiniteTable;
    m.support_kind = SupportKind::Finite;
    m.atoms = std::move(atoms);
    double tot = 0.0;
    for (auto& [p, w] : m.atoms) tot += p;
    for (auto& [p, w] : m.atoms) p /= tot;
    return m;
  }

  WeightFunction sample_weight(Rng& rng) const {
    WeightFunction scratch;
    return sample_weight_ref(rng, scratch);
  }

  // allocation-free draw: finite-support families return a reference to the
  // stored atom, parametric ones fill the caller's scratch in place
  const WeightFunction& sample_weight_ref(Rng& rng, WeightFunction& scratch) const {
    switch (family) {
      case ModelFamily::Potts:
        return atoms[0].second;
      case ModelFamily::GaussianKSpin:
        make_kspin_weight_into(k, rng.normal(), beta, scratch);
        return scratch;
      case ModelFamily::Xorsat:
        return rng.bernoulli(0.5) ? atoms[0].second : atoms[1].second;
      case ModelFamily::FiniteTable: {
        double x = rng.unif();
        for (const auto& [p, w] : atoms) {
          x -= p;
          if (x < 0.0) return w;
        }
        return atoms.back().second;
      }
    }
    throw std::logic_error("unreachable");
  }

  // xi = q^{-k} sum_tau E[Psi(tau)], exact for every supported family
  double xi() const {
    switch (family) {
      case ModelFamily::Potts:
        return 1.0 - (1.0 - std::exp(-beta)) / q();
      case ModelFamily::GaussianKSpin:
      case ModelFamily::Xorsat:
        return 1.0;
      case ModelFamily::FiniteTable: {
        double s = 0.0;
        for (const auto& [p, w] : atoms) {
          double ws = 0.0;
          for (double v : w.table) ws += v;
          s += p * ws;
        }
        return s / static_cast<double>(atoms[0].second.table_size());
      }
    }
    throw std::logic_error("unreachable");
  }

  // E[Psi(tau)] as a flat table
  std::vector<double> mean_weight_table() const {
    const std::size_t sz = [&] {
      std::size_t s = 1;
      for (int i = 0; i < k; ++i) s *= static_cast<std::size_t>(q());
      return s;
    }();
    switch (family) {
      case ModelFamily::GaussianKSpin:
        return std::vector<double>(sz, 1.0);  // E tanh(J beta) = 0 for symmetric J
      case ModelFamily::Potts:
        return atoms[0].second.table;
      case ModelFamily::Xorsat:
      case ModelFamily::FiniteTable: {
        std::vector<double> t(sz, 0.0);
        for (const auto& [p, w] : atoms)
          for (std::size_t i = 0; i < sz; ++i) t[i] += p * w.table[i];
        return t;
      }
    }
    throw std::logic_error("unreachable");
  }

  // E[tanh(J beta)^2]; the only second-moment statistic the k-spin family needs
  double kspin_t2() const {
    if (family == ModelFamily::Xorsat) {
      const double t = std::tanh(beta);
      return t * t;
    }
    if (family == ModelFamily::GaussianKSpin) {
      // E tanh(J beta)^2 under J ~ N(0,1), adaptive Simpson
      auto f = [&](double j) {
        const double t = std::tanh(j * beta);
        return t * t * std::exp(-j * j / 2.0) / std::sqrt(2.0 * M_PI);
      };
      double s = 0.0;
      const int n = 4000;
      const double lo = -10.0, hi = 10.0, h = (hi - lo) / n;
      for (int i = 0; i < n; ++i) {
        const double a = lo + i * h;
        s += (f(a) + 4.0 * f(a + h / 2) + f(a + h)) * h / 6.0;
      }
      return s;
    }
    throw std::logic_error("kspin_t2 defined for k-spin families only");
  }
};

// Monte-Carlo xi with standard error; exact families short-circuit
struct ValueWithSE {
  double value = 0.0;
  double se = 0.0;
  long n = 0;
};

inline ValueWithSE xi_constant(const ModelSpec& P, long n_samples, Rng& rng) {
  if (P.support_kind == SupportKind::Finite || P.family == ModelFamily::GaussianKSpin)
    return {P.xi(), 0.0, 0};
  RunningStat st;
  for (long i = 0; i < n_samples; ++i) {
    const WeightFunction w = P.sample_weight(rng);
    double s = 0.0;
    for (double v : w.table) s += v;
    st.add(s / static_cast<double>(w.table.size()));
  }
  return {st.mean, st.se(), st.n};
}

// phi(rho) = sum_tau E[Psi(tau)] prod_i rho(tau_i)
inline double phi_rho(const ModelSpec& P, const std::vector<double>& rho) {
  if (static_cast<int>(rho.size()) != P.q()) throw std::invalid_argument("rho has wrong length");
  double sum = 0.0;
  for (double x : rho) {
    if (x < -1e-12) throw std::invalid_argument("rho entries must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("rho must sum to 1");
  switch (P.family) {
    case ModelFamily::Potts: {
      double sq = 0.0;
      for (double x : rho) sq += x * x;
      return 1.0 - (1.0 - std::exp(-P.beta)) * sq;
    }
    case ModelFamily::GaussianKSpin:
    case ModelFamily::Xorsat:
      return 1.0;  // symmetric J makes phi constant
    case ModelFamily::FiniteTable: {
      const auto mean = P.mean_weight_table();
      const int q = P.q(), k = P.k;
      double s = 0.0;
      std::vector<int> tau(k, 0);
      for (std::size_t idx = 0; idx < mean.size(); ++idx) {
        double prod = mean[idx];
        std::size_t rest = idx;
        for (int i = 0; i < k; ++i) {
          prod *= rho[rest % q];
          rest /= q;
        }
        s += prod;
      }
      return s;
    }
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// discretization: partition of [0,2]^{Omega^k} into cubes of side 1/r

inline std::vector<int> cube_id(const WeightFunction& psi, int r) {
  std::vector<int> id(psi.table.size());
  for (std::size_t i = 0; i < psi.table.size(); ++i) {
    int c = static_cast<int>(std::floor(psi.table[i] * r));
    if (c >= 2 * r) c = 2 * r - 1;
    id[i] = c;
  }
  return id;
}

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
  const double m = (a + b) / 2;
  const double lm = (a + m) / 2, rm = (m + b) / 2;
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15 * tol)
    return left + right + (left + right - whole) / 15;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-9) {
  const double m = (a + b) / 2;
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace detail

// psi^(r)(tau) = E[Psi(tau) | cube containing psi]
inline WeightFunction discretize_weight(const ModelSpec& P, const WeightFunction& psi, int r) {
  if (r < 1) throw std::invalid_argument("r >= 1 required");
  const auto target = cube_id(psi, r);
  if (P.support_kind == SupportKind::Finite) {
    std::vector<double> mean(psi.table.size(), 0.0);
    double mass = 0.0;
    for (const auto& [p, w] : P.atoms) {
      if (cube_id(w, r) != target) continue;
      mass += p;
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p * w.table[i];
    }
    if (mass <= 0.0) throw std::logic_error("psi not in the support of P");
    for (double& v : mean) v /= mass;
    WeightFunction out = psi;
    out.family = WeightFamily::Table;
    out.params.clear();
    out.table = std::move(mean);
    return out;
  }
  if (P.family != ModelFamily::GaussianKSpin)
    throw std::invalid_argument("discretization needs finite support or a 1-d parametric family");

  // k-spin: the cube pins tanh(J beta) to an interval; condition J on its preimage
  const double beta = P.beta;
  const double t0 = std::tanh(psi.params[0] * beta);
  double lo = -1.0, hi = 1.0;
  for (std::size_t i = 0; i < psi.table.size(); ++i) {
    const int parity = __builtin_popcountll(i) & 1;
    const double c_lo = static_cast<double>(target[i]) / r;
    const double c_hi = static_cast<double>(target[i] + 1) / r;
    if (!parity) {  // value = 1 + t
      lo = std::max(lo, c_lo - 1.0);
      hi = std::min(hi, c_hi - 1.0);
    } else {  // value = 1 - t
      lo = std::max(lo, 1.0 - c_hi);
      hi = std::min(hi, 1.0 - c_lo);
    }
  }
  (void)t0;
  const double j_lo = std::atanh(std::max(lo, -1.0 + 1e-15)) / beta;
  const double j_hi = std::atanh(std::min(hi, 1.0 - 1e-15)) / beta;
  auto dens = [](double j) { return std::exp(-j * j / 2.0) / std::sqrt(2.0 * M_PI); };
  const double a = std::max(j_lo, -12.0), b = std::min(j_hi, 12.0);
  const double mass = detail::integrate(dens, a, b);
  const double tmean =
      detail::integrate([&](double j) { return std::tanh(j * beta) * dens(j); }, a, b) / mass;
  WeightFunction out = psi;
  out.params = {std::atanh(tmean) / beta, beta};  // keeps discretization idempotent
  for (std::size_t i = 0; i < out.table.size(); ++i) {
    const int parity = __builtin_popcountll(i) & 1;
    out.table[i] = 1.0 + (parity ? -tmean : tmean);
  }
  return out;
}

}  // namespace factorphase
