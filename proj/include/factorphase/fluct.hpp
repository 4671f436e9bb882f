#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "gibbs.hpp"
#include "graphs.hpp"
#include "la.hpp"
#include "model.hpp"
#include "operators.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace factorphase {

// event over the set of weight functions with computable probability
struct SignatureEvent {
  enum class Kind { All, Cube, Atom };
  Kind kind = Kind::All;
  std::vector<int> cube;  // cube-id vector for Kind::Cube
  int r = 0;              // cube resolution
  int atom = -1;          // index into P.atoms for Kind::Atom

  static SignatureEvent all() { return {}; }
  static SignatureEvent of_atom(int index) {
    SignatureEvent e;
    e.kind = Kind::Atom;
    e.atom = index;
    return e;
  }
  static SignatureEvent of_cube(const WeightFunction& psi, int r) {
    SignatureEvent e;
    e.kind = Kind::Cube;
    e.cube = cube_id(psi, r);
    e.r = r;
    return e;
  }

  bool matches(const ModelSpec& P, const WeightFunction& psi) const {
    switch (kind) {
      case Kind::All:
        return true;
      case Kind::Cube:
        return cube_id(psi, r) == cube;
      case Kind::Atom:
        return psi.table == P.atoms[atom].second.table;
    }
    return false;
  }

  double probability(const ModelSpec& P) const {
    switch (kind) {
      case Kind::All:
        return 1.0;
      case Kind::Atom:
        return P.atoms[atom].first;
      case Kind::Cube: {
        if (P.support_kind == SupportKind::Finite) {
          double p = 0.0;
          for (const auto& [pw, w] : P.atoms)
            if (cube_id(w, r) == cube) p += pw;
          return p;
        }
        // Gaussian k-spin: mass of the coupling preimage of the cube
        const double beta = P.beta;
        double lo = -1.0, hi = 1.0;
        for (std::size_t i = 0; i < cube.size(); ++i) {
          const int parity = __builtin_popcountll(i) & 1;
          const double c_lo = static_cast<double>(cube[i]) / r;
          const double c_hi = static_cast<double>(cube[i] + 1) / r;
          if (!parity) {
            lo = std::max(lo, c_lo - 1.0);
            hi = std::min(hi, c_hi - 1.0);
          } else {
            lo = std::max(lo, 1.0 - c_hi);
            hi = std::min(hi, 1.0 - c_lo);
          }
        }
        if (hi <= lo) return 0.0;
        const double j_lo = std::atanh(std::max(lo, -1.0 + 1e-15)) / beta;
        const double j_hi = std::atanh(std::min(hi, 1.0 - 1e-15)) / beta;
        auto dens = [](double j) { return std::exp(-j * j / 2.0) / std::sqrt(2.0 * M_PI); };
        return detail::integrate(dens, std::max(j_lo, -12.0), std::min(j_hi, 12.0));
      }
    }
    return 0.0;
  }

  // E[Psi | event] as a table
  std::vector<double> conditional_mean(const ModelSpec& P) const {
    switch (kind) {
      case Kind::All:
        return P.mean_weight_table();
      case Kind::Atom:
        return P.atoms[atom].second.table;
      case Kind::Cube: {
        if (P.support_kind == SupportKind::Finite) {
          std::vector<double> mean;
          double mass = 0.0;
          for (const auto& [pw, w] : P.atoms) {
            if (cube_id(w, r) != cube) continue;
            if (mean.empty()) mean.assign(w.table.size(), 0.0);
            mass += pw;
            for (std::size_t i = 0; i < w.table.size(); ++i) mean[i] += pw * w.table[i];
          }
          if (mass <= 0.0) throw std::invalid_argument("event has zero probability");
          for (double& v : mean) v /= mass;
          return mean;
        }
        // parametric: reuse the discretization machinery via a representative
        WeightFunction rep;
        rep.q = P.q();
        rep.k = P.k;
        rep.family = WeightFamily::KSpin;
        // invert one cube coordinate to recover a representative coupling
        const double c_mid = (cube[1] + 0.5) / r;  // index 1 has odd parity: 1 - t
        const double t_rep = std::clamp(1.0 - c_mid, -1 + 1e-9, 1 - 1e-9);
        rep.params = {std::atanh(t_rep) / P.beta, P.beta};
        make_kspin_weight_into(P.k, rep.params[0], P.beta, rep);
        return discretize_weight(P, rep, r).table;
      }
    }
    throw std::logic_error("unreachable");
  }
};

// cycle pattern: events along the cycle plus entry/exit positions (0-based)
struct Signature {
  std::vector<SignatureEvent> events;
  std::vector<int> s, t;

  int order() const { return static_cast<int>(events.size()); }

  void validate() const {
    const int ell = order();
    if (ell < 1 || static_cast<int>(s.size()) != ell || static_cast<int>(t.size()) != ell)
      throw std::invalid_argument("malformed signature");
    for (int i = 0; i < ell; ++i)
      if (s[i] == t[i]) throw std::invalid_argument("entry and exit positions must differ");
    if (ell == 1 && s[0] >= t[0]) throw std::invalid_argument("order-1 signatures need s < t");
  }

  static Signature all_of_order(int ell, const std::vector<int>& s, const std::vector<int>& t) {
    Signature y;
    y.events.assign(ell, SignatureEvent::all());
    y.s = s;
    y.t = t;
    y.validate();
    return y;
  }
};

struct SignatureConstants {
  double kappa = 0.0;       // Poisson mean in the null model
  double kappa_hat = 0.0;   // Poisson mean in the reweighted model
  double delta = 0.0;       // Tr(Phi_Y) - 1
  Matrix phi_y;
};

// kappa normalization: (d/k)^ell prod P(E_i) / (2 ell), except that at
// ell = 1 the s < t convention already fixes the orientation, so the
// empirically correct factor is 1/ell (see the census documentation)
inline double kappa_normalization(int ell) { return ell == 1 ? 1.0 : 1.0 / (2.0 * ell); }

inline SignatureConstants signature_constants(const Signature& y, double d, const ModelSpec& P) {
  y.validate();
  const int ell = y.order();
  const int k = P.k;
  SignatureConstants out;
  double kappa = kappa_normalization(ell) * std::pow(d / k, ell);
  Matrix phi_y = Matrix::identity(P.q());
  for (int i = 0; i < ell; ++i) {
    const double pe = y.events[i].probability(P);
    if (pe <= 0.0) throw std::invalid_argument("event has zero probability");
    kappa *= pe;
    phi_y = matmul(phi_y, phi_of_table(y.events[i].conditional_mean(P), P.q(), k, y.s[i],
                                       y.t[i], P.xi()));
  }
  out.kappa = kappa;
  out.phi_y = phi_y;
  out.delta = trace(phi_y) - 1.0;
  out.kappa_hat = kappa * trace(phi_y);
  return out;
}

// ---------------------------------------------------------------------------
// cycle enumeration per CYC1-CYC4: variables pairwise distinct with the
// smallest index first, constraints pairwise distinct with h_1 < h_ell for
// ell > 1 (s_1 < t_1 at ell = 1)

struct CycleCensus {
  std::vector<long> signature_counts;      // parallel to the requested signatures
  std::vector<long> order_totals;          // C_l for l = 1..ell_max
};

inline CycleCensus count_cycles(const FactorGraph& g, int ell_max,
                                const std::vector<Signature>& signatures,
                                const ModelSpec* P = nullptr) {
  if (ell_max > 8) throw std::invalid_argument("ell_max > 8 exceeds the census budget");
  for (const auto& y : signatures) {
    y.validate();
    if (y.order() > ell_max) throw std::invalid_argument("signature order above ell_max");
  }
  CycleCensus census;
  census.signature_counts.assign(signatures.size(), 0);
  census.order_totals.assign(ell_max + 1, 0);  // index by order, slot 0 unused

  std::vector<std::vector<long>> var_cons(g.n);
  for (long a = 0; a < g.m(); ++a) {
    const std::uint32_t* t = g.nb(a);
    for (int i = 0; i < g.k; ++i) {
      if (var_cons[t[i]].empty() || var_cons[t[i]].back() != a) var_cons[t[i]].push_back(a);
    }
  }

  struct Step {
    long con;
    int s, t;
  };
  std::vector<Step> walk;
  std::vector<char> con_used(g.m(), 0);
  std::vector<char> var_used(g.n, 0);

  // record a closed walk of length L starting (minimally) at v0
  auto record = [&](long /*v0*/) {
    const int L = static_cast<int>(walk.size());
    if (L > 1 && walk.front().con >= walk.back().con) return;  // CYC2
    if (L == 1 && walk[0].s >= walk[0].t) return;
    ++census.order_totals[L];
    for (std::size_t yi = 0; yi < signatures.size(); ++yi) {
      const Signature& y = signatures[yi];
      if (y.order() != L) continue;
      bool ok = true;
      for (int j = 0; j < L && ok; ++j) {
        if (y.s[j] != walk[j].s || y.t[j] != walk[j].t) ok = false;
        if (ok && y.events[j].kind != SignatureEvent::Kind::All) {
          if (!P) throw std::invalid_argument("event signatures need the model");
          if (!y.events[j].matches(*P, g.weight(walk[j].con))) ok = false;
        }
      }
      if (ok) ++census.signature_counts[yi];
    }
  };

  // depth-first extension from the current variable
  std::function<void(long, long)> extend = [&](long v0, long cur) {
    if (static_cast<int>(walk.size()) >= ell_max) return;
    for (long a : var_cons[cur]) {
      if (con_used[a]) continue;
      const std::uint32_t* nb = g.nb(a);
      for (int s = 0; s < g.k; ++s) {
        if (nb[s] != static_cast<std::uint32_t>(cur)) continue;
        for (int t = 0; t < g.k; ++t) {
          if (t == s) continue;
          const long next = nb[t];
          walk.push_back({a, s, t});
          con_used[a] = 1;
          if (next == v0) {
            record(v0);
          } else if (!var_used[next] && next > v0) {
            var_used[next] = 1;
            extend(v0, next);
            var_used[next] = 0;
          }
          con_used[a] = 0;
          walk.pop_back();
        }
      }
    }
  };

  for (long v0 = 0; v0 < g.n; ++v0) {
    if (var_cons[v0].empty()) continue;
    var_used[v0] = 1;
    extend(v0, v0);
    var_used[v0] = 0;
  }
  return census;
}

// ---------------------------------------------------------------------------
// Poisson goodness of fit for cycle counts

enum class CensusModel { Null, Nishimori };

struct PoissonFitRow {
  double empirical_mean = 0.0;
  double se = 0.0;
  double predicted_mean = 0.0;
  double z = 0.0;
};

struct PoissonFit {
  std::vector<PoissonFitRow> per_signature;
  std::vector<PoissonFitRow> per_order;       // totals C_l vs ((k-1)d)^l / (2l)
  double independence_chi2 = 0.0;             // first two signatures, joint cells
  double independence_df = 0.0;
  double independence_pvalue = 1.0;
};

inline PoissonFit poisson_fit(CensusModel model, double d, const ModelSpec& P,
                              const std::vector<Signature>& signatures, long n, long n_graphs,
                              int ell_max, Rng& rng, int workers = 1) {
  const std::uint64_t base = rng.u64();
  std::vector<std::vector<long>> sig_counts(n_graphs);
  std::vector<std::vector<long>> order_counts(n_graphs);
  parallel_tasks(n_graphs, workers, [&](long task) {
    Rng trng = Rng::stream(base, static_cast<std::uint64_t>(task));
    FactorGraph g;
    if (model == CensusModel::Null) {
      GenConfig cfg;
      cfg.n = n;
      cfg.d = d;
      g = gen_null(cfg, P, trng);
    } else {
      const long m = trng.poisson(d * static_cast<double>(n) / P.k);
      g = gen_nishimori(n, m, P, trng).first;
    }
    const auto census = count_cycles(g, ell_max, signatures, &P);
    sig_counts[task] = census.signature_counts;
    order_counts[task] = census.order_totals;
  });

  PoissonFit fit;
  for (std::size_t yi = 0; yi < signatures.size(); ++yi) {
    RunningStat st;
    for (long t = 0; t < n_graphs; ++t) st.add(static_cast<double>(sig_counts[t][yi]));
    const auto sc = signature_constants(signatures[yi], d, P);
    PoissonFitRow row;
    row.empirical_mean = st.mean;
    row.se = st.se();
    row.predicted_mean = model == CensusModel::Null ? sc.kappa : sc.kappa_hat;
    row.z = row.se > 0 ? (st.mean - row.predicted_mean) / row.se : 0.0;
    fit.per_signature.push_back(row);
  }
  for (int l = 1; l <= ell_max; ++l) {
    RunningStat st;
    for (long t = 0; t < n_graphs; ++t) st.add(static_cast<double>(order_counts[t][l]));
    PoissonFitRow row;
    row.empirical_mean = st.mean;
    row.se = st.se();
    if (model == CensusModel::Null) {
      row.predicted_mean = std::pow((P.k - 1) * d, l) / (2.0 * l);
    } else {
      // totals inflate by Tr of the corresponding conditional product; for
      // all-Psi cycles that is Tr(Phi^l), uniform over (s,t) patterns
      Matrix phi = phi_mean(P);
      Matrix prod = Matrix::identity(P.q());
      for (int j = 0; j < l; ++j) prod = matmul(prod, phi);
      row.predicted_mean = std::pow((P.k - 1) * d, l) / (2.0 * l) * trace(prod);
    }
    row.z = row.se > 0 ? (st.mean - row.predicted_mean) / row.se : 0.0;
    fit.per_order.push_back(row);
  }
  if (signatures.size() >= 2) {
    // joint independence of the first two (disjoint) signatures: chi-square
    // over capped count cells against the product of empirical marginals
    const int cap = 2;
    std::vector<double> joint((cap + 1) * (cap + 1), 0.0), ma(cap + 1, 0.0), mb(cap + 1, 0.0);
    for (long t = 0; t < n_graphs; ++t) {
      const int a = static_cast<int>(std::min<long>(sig_counts[t][0], cap));
      const int b = static_cast<int>(std::min<long>(sig_counts[t][1], cap));
      joint[a * (cap + 1) + b] += 1.0;
      ma[a] += 1.0;
      mb[b] += 1.0;
    }
    double chi = 0.0;
    for (int a = 0; a <= cap; ++a)
      for (int b = 0; b <= cap; ++b) {
        const double expect = ma[a] * mb[b] / n_graphs;
        if (expect < 5.0) continue;
        const double obs = joint[a * (cap + 1) + b];
        chi += (obs - expect) * (obs - expect) / expect;
      }
    fit.independence_chi2 = chi;
    fit.independence_df = cap * cap;
    fit.independence_pvalue = chi_square_sf(chi, fit.independence_df);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// the limiting free-energy distribution K

struct KSample {
  double value = 0.0;
  int ell_max = 0;
  double tail_bound = 0.0;
};

class KSampler {
 public:
  KSampler(double d, const ModelSpec& P, int ell_max, bool conditioned_on_s)
      : d_(d), P_(P), ell_max_(ell_max), cond_s_(conditioned_on_s) {
    phi_ = phi_mean(P);
    const auto xi = xi_operator(P);
    const auto rep = spectra(phi_, xi, P.k);
    lambda_hat_ = rep.lambda_hat;
    const double x = d * (P.k - 1);
    if (x * lambda_hat_ >= 1.0 - 1e-6)
      throw std::runtime_error("d(k-1) lambda_hat too close to 1: K series diverges");
    // deterministic centering terms  (d(k-1))^l / (2l) (1 - Tr Phi^l)
    Matrix prod = Matrix::identity(P.q());
    tr_phi_pow_.assign(ell_max + 1, 0.0);
    for (int l = 1; l <= ell_max; ++l) {
      prod = matmul(prod, phi_);
      tr_phi_pow_[l] = trace(prod);
    }
    // geometric tail bound beyond ell_max over Eig[Xi]
    tail_bound_ = 0.0;
    for (double lam : rep.eig_xi_on_E) {
      const double y = x * lam;
      if (std::abs(y) < 1e-15) continue;
      double series = -std::log1p(-y);
      for (int l = 1; l <= ell_max; ++l) series -= std::pow(y, l) / l;
      tail_bound_ += 0.5 * std::abs(series);
    }
  }

  double mean_poisson(int l) const { return std::pow(d_ * (P_.k - 1), l) / (2.0 * l); }
  double tail_bound() const { return tail_bound_; }
  double lambda_hat() const { return lambda_hat_; }

  KSample sample(Rng& rng) const {
    KSample out;
    out.ell_max = ell_max_;
    out.tail_bound = tail_bound_;
    double v = 0.0;
    WeightFunction scratch;
    const int l_start_poisson = cond_s_ ? (P_.k == 2 ? 3 : 2) : 1;
    for (int l = 1; l <= ell_max_; ++l) {
      v += mean_poisson(l) * (1.0 - tr_phi_pow_[l]);
      if (l < l_start_poisson) continue;  // given S these cycle counts vanish
      const long kl = rng.poisson(mean_poisson(l));
      for (long i = 0; i < kl; ++i) {
        Matrix prod = phi_of_psi(P_, P_.sample_weight_ref(rng, scratch));
        for (int j = 1; j < l; ++j)
          prod = matmul(prod, phi_of_psi(P_, P_.sample_weight_ref(rng, scratch)));
        v += std::log(trace(prod));
      }
    }
    out.value = v;
    return out;
  }

 private:
  double d_;
  ModelSpec P_;
  int ell_max_;
  bool cond_s_;
  Matrix phi_;
  double lambda_hat_ = 0.0;
  std::vector<double> tr_phi_pow_;
  double tail_bound_ = 0.0;
};

inline KSample sample_K(double d, const ModelSpec& P, int ell_max, bool conditioned_on_s,
                        Rng& rng) {
  return KSampler(d, P, ell_max, conditioned_on_s).sample(rng);
}

// ---------------------------------------------------------------------------
// moment formulas

struct MomentReport {
  double log_ez_exact = 0.0;       // profile sum
  double log_ez_asymptotic = 0.0;  // q^{n+1/2} xi^m / prod sqrt(1 - d(k-1) lambda)
  double log_second_moment_bound = 0.0;
  double variance_ratio = 0.0;     // prod over Eig[Xi] of (1 - d(k-1) lambda)^{-1/2}
};

// log E[Z(G(n,m))] = log sum over profiles of binom(n, n rho) phi(rho)^m
inline double log_expected_z_profile_sum(const ModelSpec& P, long n, long m) {
  const int q = P.q();
  if (detail::profile_count(n, q) > 1e7)
    throw std::runtime_error("profile enumeration budget exceeded");
  std::vector<long> counts(q, 0);
  std::vector<double> logs;
  detail::for_each_profile(n, q, counts, 0, [&](const std::vector<long>& c) {
    logs.push_back(detail::log_profile_weight(P, n, m, c));
  });
  return log_sum_exp(logs);
}

inline MomentReport moment_formulas(long n, long m, double d, const ModelSpec& P,
                                    const SpectralReport& rep) {
  MomentReport mr;
  const double x = d * (P.k - 1);
  const int q = P.q();
  double corr = 0.0;
  bool skipped_unit = false;
  for (double lam : rep.eig_phi) {
    if (!skipped_unit && std::abs(lam - 1.0) <= 1e-9) {
      skipped_unit = true;
      continue;
    }
    if (x * lam >= 1.0) throw std::runtime_error("eigenvalue crosses 1/(d(k-1))");
    corr += std::log1p(-x * lam);
  }
  // the profile lattice has covolume sqrt(q), so the Laplace constant is q^n
  // (verified against the exact profile sum; k-spin gives E[Z] = q^n exactly)
  mr.log_ez_asymptotic =
      n * std::log(static_cast<double>(q)) + m * std::log(P.xi()) - 0.5 * corr;
  mr.log_ez_exact = log_expected_z_profile_sum(P, n, m);
  double corr2 = 0.0;
  for (double lam : rep.eig_xi_on_Eprime) {
    if (x * lam >= 1.0) throw std::runtime_error("eigenvalue crosses 1/(d(k-1))");
    corr2 += std::log1p(-x * lam);
  }
  mr.log_second_moment_bound =
      2 * n * std::log(static_cast<double>(q)) + 2 * m * std::log(P.xi()) - 0.5 * corr2;
  double vr = 0.0;
  for (double lam : rep.eig_xi_on_E) {
    if (x * lam >= 1.0) throw std::runtime_error("eigenvalue crosses 1/(d(k-1))");
    vr += std::log1p(-x * lam);
  }
  mr.variance_ratio = std::exp(-0.5 * vr);
  return mr;
}

// ---------------------------------------------------------------------------
// fluctuation experiment: centered free energies against K samples

struct FluctuationResult {
  std::vector<double> centered;   // lnZ - n ln q - m ln xi + (1/2) sum ln(1-d(k-1)lam)
  std::vector<double> k_samples;
  double ks_distance = 0.0;
  double centered_mean = 0.0;
  double centered_se = 0.0;
  double k_mean = 0.0;
  double k_se = 0.0;
};

inline FluctuationResult fluctuation_experiment(double d, const ModelSpec& P, long n,
                                                long n_graphs, long n_k_samples, int ell_max,
                                                bool conditioned_on_s, Rng& rng,
                                                int workers = 1) {
  if (d * (P.k - 1) >= 1.0)
    throw std::runtime_error("fluctuation experiment needs the sub-percolation regime");
  const auto rep = spectra(phi_mean(P), xi_operator(P), P.k);
  const double x = d * (P.k - 1);
  double corr = 0.0;
  bool skipped_unit = false;
  for (double lam : rep.eig_phi) {
    if (!skipped_unit && std::abs(lam - 1.0) <= 1e-9) {
      skipped_unit = true;
      continue;
    }
    corr += std::log1p(-x * lam);
  }
  const double ln_q = std::log(static_cast<double>(P.q()));
  const double ln_xi = std::log(P.xi());

  FluctuationResult out;
  const std::uint64_t base = rng.u64();
  std::vector<double> centered(n_graphs);
  std::vector<char> keep(n_graphs, 1);
  parallel_tasks(n_graphs, workers, [&](long task) {
    Rng trng = Rng::stream(base, static_cast<std::uint64_t>(task));
    for (;;) {
      GenConfig cfg;
      cfg.n = n;
      cfg.d = d;
      const FactorGraph g = gen_null(cfg, P, trng);
      if (conditioned_on_s && !is_simple(g)) continue;  // resample until in S
      const double lz = partition_exact(g, PartitionMode::Components).log_z;
      centered[task] = lz - n * ln_q - g.m() * ln_xi + 0.5 * corr;
      return;
    }
  });
  out.centered.assign(centered.begin(), centered.end());
  (void)keep;

  KSampler ks(d, P, ell_max, conditioned_on_s);
  const std::uint64_t base_k = rng.u64();
  out.k_samples.resize(n_k_samples);
  parallel_tasks(n_k_samples, workers, [&](long task) {
    Rng trng = Rng::stream(base_k, static_cast<std::uint64_t>(task));
    out.k_samples[task] = ks.sample(trng).value;
  });

  // both laws carry point masses (acyclic graphs vs zero cycle counts) at the
  // same real values; snap to a common grid so float noise in lnZ does not
  // split identical atoms across the two samples
  auto snapped = [](std::vector<double> v) {
    for (double& x : v) x = std::round(x * 1e9) / 1e9;
    return v;
  };
  out.ks_distance = ks_two_sample(snapped(out.centered), snapped(out.k_samples));
  RunningStat a, b;
  for (double v : out.centered) a.add(v);
  for (double v : out.k_samples) b.add(v);
  out.centered_mean = a.mean;
  out.centered_se = a.se();
  out.k_mean = b.mean;
  out.k_se = b.se();
  return out;
}

}  // namespace factorphase
