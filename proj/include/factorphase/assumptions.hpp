#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "la.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace factorphase {

using DistList = std::vector<std::vector<double>>;  // points of P(Omega)

struct CheckBudget {
  long sym_samples = 100;
  long bal_points = 50;
  int min_restarts = 50;
  long pos_samples = 20000;
};

struct AssumptionReport {
  bool sym_ok = false;
  double sym_violation = 0.0;
  bool bal_ok = false;
  double bal_worst_eig = 0.0;  // largest Hessian eigenvalue seen on the centered subspace
  bool min_ok = false;
  std::vector<double> min_best;  // best minimizer over R(Omega), flattened q x q
  double min_dist_uniform = 0.0;
  double pos_estimate = 0.0;
  double pos_se = 0.0;
};

namespace detail {

// max over (i, omega) of |sum_{tau: tau_i = omega} psi(tau) - q^{k-1} xi|
inline double sym_violation_of(const WeightFunction& psi, double xi) {
  const int q = psi.q, k = psi.k;
  double worst = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k) * q, 0.0);
  std::size_t stride = 1;
  for (int i = 0; i < k; ++i) {
    for (std::size_t idx = 0; idx < psi.table.size(); ++idx) {
      const int w = static_cast<int>((idx / stride) % q);
      sums[static_cast<std::size_t>(i) * q + w] += psi.table[idx];
    }
    stride *= q;
  }
  const double expect = std::pow(static_cast<double>(q), k - 1) * xi;
  for (double s : sums) worst = std::max(worst, std::abs(s - expect));
  return worst;
}

// Hessian of phi at rho, from the mean weight table
inline Matrix phi_hessian(const std::vector<double>& mean, int q, int k,
                          const std::vector<double>& rho) {
  Matrix h(q, q);
  std::vector<int> tau(k);
  for (std::size_t idx = 0; idx < mean.size(); ++idx) {
    std::size_t rest = idx;
    for (int i = 0; i < k; ++i) {
      tau[i] = static_cast<int>(rest % q);
      rest /= q;
    }
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l) {
        if (j == l) continue;
        double prod = mean[idx];
        for (int i = 0; i < k; ++i)
          if (i != j && i != l) prod *= rho[tau[i]];
        h(tau[j], tau[l]) += prod;
      }
  }
  return h;
}

inline double max_eig_on_centered(const Matrix& h) {
  const int q = h.rows;
  const auto basis = ones_complement_basis(q);
  Matrix proj(q - 1, q - 1);
  for (int a = 0; a < q - 1; ++a)
    for (int b = 0; b < q - 1; ++b) {
      double s = 0.0;
      for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) s += basis[a][i] * h(i, j) * basis[b][j];
      proj(a, b) = s;
    }
  for (int a = 0; a < q - 1; ++a)  // symmetrize rounding noise
    for (int b = a + 1; b < q - 1; ++b) {
      const double m = 0.5 * (proj(a, b) + proj(b, a));
      proj(a, b) = proj(b, a) = m;
    }
  auto eig = eigen_symmetric(proj);
  return eig.values.front();
}

// E[Psi(sigma) Psi(tau)] indexed by pairs u_i = (sigma_i, tau_i), the mean
// table of the tensor-square model
inline std::vector<double> pair_mean_table(const ModelSpec& P) {
  const int q = P.q(), k = P.k;
  std::size_t qk = 1;
  for (int i = 0; i < k; ++i) qk *= static_cast<std::size_t>(q);
  std::vector<double> table(qk * qk, 0.0);
  auto add_atom = [&](double p, const WeightFunction& w) {
    for (std::size_t i = 0; i < qk; ++i)
      for (std::size_t j = 0; j < qk; ++j) table[i * qk + j] += p * w.table[i] * w.table[j];
  };
  switch (P.family) {
    case ModelFamily::Potts:
    case ModelFamily::Xorsat:
    case ModelFamily::FiniteTable:
      for (const auto& [p, w] : P.atoms) add_atom(p, w);
      break;
    case ModelFamily::GaussianKSpin: {
      const double t2 = P.kspin_t2();
      for (std::size_t i = 0; i < qk; ++i)
        for (std::size_t j = 0; j < qk; ++j) {
          const int par = (__builtin_popcountll(i) + __builtin_popcountll(j)) & 1;
          table[i * qk + j] = 1.0 + (par ? -t2 : t2);
        }
      break;
    }
  }
  return table;
}

// objective of MIN over R(Omega) and its gradient; rho is a flattened q x q
// distribution with uniform marginals, treated as a distribution on pairs
struct MinObjective {
  int q, k;
  std::vector<double> w;  // (q^2)^k pair-mean table re-indexed little-endian in u

  double value(const std::vector<double>& rho) const {
    const int Q = q * q;
    double s = 0.0;
    for (std::size_t idx = 0; idx < w.size(); ++idx) {
      double prod = w[idx];
      std::size_t rest = idx;
      for (int i = 0; i < k; ++i) {
        prod *= rho[rest % Q];
        rest /= Q;
      }
      s += prod;
    }
    return s;
  }

  std::vector<double> gradient(const std::vector<double>& rho) const {
    const int Q = q * q;
    std::vector<double> g(Q, 0.0);
    std::vector<int> u(k);
    for (std::size_t idx = 0; idx < w.size(); ++idx) {
      std::size_t rest = idx;
      for (int i = 0; i < k; ++i) {
        u[i] = static_cast<int>(rest % Q);
        rest /= Q;
      }
      for (int j = 0; j < k; ++j) {
        double prod = w[idx];
        for (int i = 0; i < k; ++i)
          if (i != j) prod *= rho[u[i]];
        g[u[j]] += prod;
      }
    }
    return g;
  }
};

// the MIN index space uses u = sigma + q * tau; convert the pair-mean table
// (which is indexed by two separate q^k indices) into that layout
inline MinObjective make_min_objective(const ModelSpec& P) {
  const int q = P.q(), k = P.k;
  const int Q = q * q;
  std::size_t qk = 1;
  for (int i = 0; i < k; ++i) qk *= static_cast<std::size_t>(q);
  std::size_t Qk = 1;
  for (int i = 0; i < k; ++i) Qk *= static_cast<std::size_t>(Q);
  const auto pair = pair_mean_table(P);
  MinObjective obj{q, k, std::vector<double>(Qk, 0.0)};
  for (std::size_t idx = 0; idx < Qk; ++idx) {
    std::size_t rest = idx, si = 0, ti = 0, stride = 1;
    for (int i = 0; i < k; ++i) {
      const int u = static_cast<int>(rest % Q);
      rest /= Q;
      si += static_cast<std::size_t>(u % q) * stride;
      ti += static_cast<std::size_t>(u / q) * stride;
      stride *= static_cast<std::size_t>(q);
    }
    obj.w[idx] = pair[si * qk + ti];
  }
  return obj;
}

// Euclidean projection onto {row sums = col sums = 1/q}, then clip; a few
// alternations land inside R(Omega) to working precision
inline void project_R(std::vector<double>& rho, int q) {
  for (int iter = 0; iter < 60; ++iter) {
    std::vector<double> r(q, 0.0), c(q, 0.0);
    double total = 0.0;
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) {
        const double x = rho[static_cast<std::size_t>(i) * q + j];
        r[i] += x;
        c[j] += x;
        total += x;
      }
    double worst = 0.0;
    for (int i = 0; i < q; ++i)
      worst = std::max({worst, std::abs(r[i] - 1.0 / q), std::abs(c[i] - 1.0 / q)});
    bool neg = false;
    for (double x : rho)
      if (x < 0.0) neg = true;
    if (worst < 1e-14 && !neg) return;
    const double mu = (total - 1.0) / (q * q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) {
        double& x = rho[static_cast<std::size_t>(i) * q + j];
        x += (1.0 / q - r[i]) / q + (1.0 / q - c[j]) / q + mu;
        if (x < 0.0) x = 0.0;
      }
  }
}

}  // namespace detail

// numeric probes of SYM, BAL, MIN, POS for a model distribution
inline AssumptionReport check_assumptions(const ModelSpec& P, const DistList& pi,
                                          const DistList& pi_prime, const CheckBudget& budget,
                                          Rng& rng) {
  AssumptionReport rep;
  const int q = P.q(), k = P.k;
  const double xi = P.xi();

  // SYM: every sampled weight function satisfies the row-sum identity
  {
    double worst = 0.0;
    if (P.support_kind == SupportKind::Finite) {
      for (const auto& [p, w] : P.atoms) worst = std::max(worst, detail::sym_violation_of(w, xi));
    }
    const long n = P.support_kind == SupportKind::Finite ? budget.sym_samples / 10 + 1
                                                         : budget.sym_samples;
    for (long i = 0; i < n; ++i)
      worst = std::max(worst, detail::sym_violation_of(P.sample_weight(rng), xi));
    rep.sym_violation = worst;
    rep.sym_ok = worst <= 1e-10;
  }

  // BAL: Hessian of phi negative semidefinite on the centered subspace, at the
  // uniform distribution and at random interior points
  {
    const auto mean = P.mean_weight_table();
    const std::vector<double> unif(q, 1.0 / q);
    double worst = detail::max_eig_on_centered(detail::phi_hessian(mean, q, k, unif));
    const double phi_bar = phi_rho(P, unif);
    bool max_at_uniform = true;
    for (long t = 0; t < budget.bal_points; ++t) {
      std::vector<double> rho(q);
      double s = 0.0;
      for (int i = 0; i < q; ++i) {
        rho[i] = -std::log(1.0 - rng.unif());
        s += rho[i];
      }
      for (int i = 0; i < q; ++i) rho[i] /= s;
      worst = std::max(worst, detail::max_eig_on_centered(detail::phi_hessian(mean, q, k, rho)));
      if (phi_rho(P, rho) > phi_bar + 1e-12) max_at_uniform = false;
    }
    rep.bal_worst_eig = worst;
    rep.bal_ok = worst <= 1e-9 && max_at_uniform;
  }

  // MIN: projected gradient descent over R(Omega), multi-start
  {
    const auto obj = detail::make_min_objective(P);
    std::vector<double> unif_pair(static_cast<std::size_t>(q) * q, 1.0 / (q * q));
    const double at_uniform = obj.value(unif_pair);
    double best_val = at_uniform;
    std::vector<double> best = unif_pair;
    for (int restart = 0; restart < budget.min_restarts; ++restart) {
      std::vector<double> rho(static_cast<std::size_t>(q) * q);
      double s = 0.0;
      for (auto& x : rho) {
        x = -std::log(1.0 - rng.unif());
        s += x;
      }
      for (auto& x : rho) x /= s;
      detail::project_R(rho, q);
      double step = 0.25;
      double val = obj.value(rho);
      for (int iter = 0; iter < 2000; ++iter) {
        const auto g = obj.gradient(rho);
        std::vector<double> cand(rho.size());
        double moved = 0.0;
        for (;;) {
          for (std::size_t i = 0; i < rho.size(); ++i) cand[i] = rho[i] - step * g[i];
          detail::project_R(cand, q);
          const double cval = obj.value(cand);
          if (cval <= val + 1e-15 || step < 1e-12) {
            moved = 0.0;
            for (std::size_t i = 0; i < rho.size(); ++i)
              moved = std::max(moved, std::abs(cand[i] - rho[i]));
            rho.swap(cand);
            val = cval;
            break;
          }
          step /= 2;
        }
        if (moved < 1e-8) break;
        step *= 1.3;
      }
      if (val < best_val) {
        best_val = val;
        best = rho;
      }
    }
    double dist = 0.0;
    for (std::size_t i = 0; i < best.size(); ++i) dist += std::abs(best[i] - 1.0 / (q * q));
    rep.min_best = best;
    rep.min_dist_uniform = 0.5 * dist;
    // flat (quartic) minima keep gradient descent at a distance, so the pass
    // criterion is that uniform attains the lowest value found
    rep.min_ok = best_val >= at_uniform - 1e-9 * std::max(1.0, std::abs(at_uniform));
  }

  // POS: Monte-Carlo estimate of the displayed expectation
  {
    auto draw = [&](const DistList& lst) -> const std::vector<double>& {
      return lst[rng.unif_int(lst.size())];
    };
    RunningStat st;
    std::vector<const std::vector<double>*> rhos(k), rhos_p(k);
    std::vector<int> tau(k);
    for (long s = 0; s < budget.pos_samples; ++s) {
      const WeightFunction w = P.sample_weight(rng);
      for (int i = 0; i < k; ++i) {
        rhos[i] = &draw(pi);
        rhos_p[i] = &draw(pi_prime);
      }
      double a = 0.0, b = 0.0, mix = 0.0;
      std::vector<double> mixes(k, 0.0);
      for (std::size_t idx = 0; idx < w.table.size(); ++idx) {
        std::size_t rest = idx;
        for (int i = 0; i < k; ++i) {
          tau[i] = static_cast<int>(rest % q);
          rest /= q;
        }
        double pa = w.table[idx], pb = w.table[idx];
        for (int i = 0; i < k; ++i) {
          pa *= (*rhos[i])[tau[i]];
          pb *= (*rhos_p[i])[tau[i]];
        }
        a += pa;
        b += pb;
        for (int h = 0; h < k; ++h) {
          double pm = w.table[idx];
          for (int i = 0; i < k; ++i) pm *= (i == h ? (*rhos[i])[tau[i]] : (*rhos_p[i])[tau[i]]);
          mixes[h] += pm;
        }
      }
      mix = 0.0;
      for (int h = 0; h < k; ++h) mix += lambda_xlnx(mixes[h]);
      st.add(lambda_xlnx(a) + (k - 1) * lambda_xlnx(b) - mix);
    }
    rep.pos_estimate = st.mean;
    rep.pos_se = st.se();
  }
  return rep;
}

}  // namespace factorphase
