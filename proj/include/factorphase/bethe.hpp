#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "model.hpp"
#include "operators.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace factorphase {

// weighted multiset of points of P(Omega) representing pi in P^2_*(Omega)
struct Population {
  int q = 2;
  std::vector<std::vector<double>> points;

  static Population uniform_atom(int q, long n_points) {
    Population p;
    p.q = q;
    p.points.assign(n_points, std::vector<double>(q, 1.0 / q));
    return p;
  }

  // mixture of near-delta points, one spin direction per point
  static Population polarized(int q, long n_points, double floor_mass = 0.01) {
    Population p;
    p.q = q;
    for (long i = 0; i < n_points; ++i) {
      std::vector<double> pt(q, floor_mass / q);
      pt[i % q] += 1.0 - floor_mass;
      p.points.push_back(std::move(pt));
    }
    return p;
  }

  std::vector<double> barycenter() const {
    std::vector<double> b(q, 0.0);
    for (const auto& pt : points)
      for (int s = 0; s < q; ++s) b[s] += pt[s] / points.size();
    return b;
  }

  double barycenter_tv_from_uniform() const {
    const auto b = barycenter();
    double s = 0.0;
    for (double x : b) s += std::abs(x - 1.0 / q);
    return s / 2;
  }

  // subtract the barycenter excess, clip at zero, renormalize; repeats until
  // within tolerance
  void recenter(double eps_bal = 1e-3) {
    for (int iter = 0; iter < 50; ++iter) {
      if (barycenter_tv_from_uniform() <= eps_bal) return;
      const auto b = barycenter();
      for (auto& pt : points) {
        double norm = 0.0;
        for (int s = 0; s < q; ++s) {
          pt[s] = std::max(0.0, pt[s] - (b[s] - 1.0 / q));
          norm += pt[s];
        }
        for (double& x : pt) x /= norm;
      }
    }
  }

  double mean_point_tv_from_uniform() const {
    double acc = 0.0;
    for (const auto& pt : points) {
      double s = 0.0;
      for (double x : pt) s += std::abs(x - 1.0 / q);
      acc += s / 2;
    }
    return acc / points.size();
  }
};

struct BetheEstimate {
  double value = 0.0;
  double se = 0.0;
  long n_samples = 0;
  double d = 0.0;
  double threshold = 0.0;  // ln q + (d/k) ln xi
};

inline double bethe_threshold(const ModelSpec& P, double d) {
  return std::log(static_cast<double>(P.q())) + d / P.k * std::log(P.xi());
}

namespace detail {

// f(sigma) = sum_{tau: tau_k = sigma} psi(tau) prod_{j<k} rho_j(tau_j)
inline void cavity_factor(const WeightFunction& psi,
                          const std::vector<const std::vector<double>*>& parents,
                          std::vector<double>& out) {
  const int q = psi.q, k = psi.k;
  out.assign(q, 0.0);
  long total = 1;
  for (int i = 0; i < k - 1; ++i) total *= q;
  for (long e = 0; e < total; ++e) {
    long rest = e;
    double prod = 1.0;
    std::size_t idx = 0, stride = 1;
    for (int j = 0; j < k - 1; ++j) {
      const int s = static_cast<int>(rest % q);
      rest /= q;
      prod *= (*parents[j])[s];
      idx += static_cast<std::size_t>(s) * stride;
      stride *= static_cast<std::size_t>(q);
    }
    if (prod == 0.0) continue;
    for (int sigma = 0; sigma < q; ++sigma)
      out[sigma] += prod * psi.table[idx + static_cast<std::size_t>(sigma) * stride];
  }
}

inline double edge_term_inner(const WeightFunction& psi,
                              const std::vector<const std::vector<double>*>& parents) {
  const int q = psi.q, k = psi.k;
  double s = 0.0;
  for (std::size_t idx = 0; idx < psi.table.size(); ++idx) {
    double prod = psi.table[idx];
    std::size_t rest = idx;
    for (int j = 0; j < k; ++j) {
      prod *= (*parents[j])[rest % q];
      rest /= q;
    }
    s += prod;
  }
  return s;
}

}  // namespace detail

// Monte-Carlo Bethe functional B(d, P, pi)
inline BetheEstimate bethe_estimate(double d, const ModelSpec& P, const Population& pi,
                                    long n_mc, Rng& rng, int workers = 1) {
  const int q = P.q(), k = P.k;
  const double xi = P.xi(), ln_xi = std::log(xi);
  const std::uint64_t base = rng.u64();
  const long per_task = 4096;
  const long n_tasks = (n_mc + per_task - 1) / per_task;
  std::vector<RunningStat> parts(n_tasks);
  parallel_tasks(n_tasks, workers, [&](long task) {
    Rng trng = Rng::stream(base, static_cast<std::uint64_t>(task));
    WeightFunction scratch;
    std::vector<const std::vector<double>*> parents(k);
    std::vector<double> factor(q), logf(q);
    auto draw = [&]() -> const std::vector<double>* {
      return &pi.points[trng.unif_int(pi.points.size())];
    };
    RunningStat& st = parts[task];
    const long lo = task * per_task, hi = std::min(n_mc, lo + per_task);
    for (long i = lo; i < hi; ++i) {
      const long gamma = trng.poisson(d);
      std::fill(logf.begin(), logf.end(), 0.0);
      for (long c = 0; c < gamma; ++c) {
        const WeightFunction& psi = P.sample_weight_ref(trng, scratch);
        for (int j = 0; j < k - 1; ++j) parents[j] = draw();
        detail::cavity_factor(psi, parents, factor);
        for (int s = 0; s < q; ++s) logf[s] += std::log(factor[s]);
      }
      const double ln_sum = log_sum_exp(logf);
      const double term1 =
          std::exp(ln_sum - std::log(static_cast<double>(q)) - gamma * ln_xi) * ln_sum;
      const WeightFunction& psi = P.sample_weight_ref(trng, scratch);
      for (int j = 0; j < k; ++j) parents[j] = draw();
      const double inner = detail::edge_term_inner(psi, parents);
      const double term2 = d * (k - 1) / (k * xi) * lambda_xlnx(inner);
      st.add(term1 - term2);
    }
  });
  RunningStat st;
  for (const auto& p : parts) st.merge(p);
  return {st.mean, st.se(), st.n, d, bethe_threshold(P, d)};
}

// ---------------------------------------------------------------------------
// exact evaluation for finite-support P and a finite-atom pi: the expectation
// over a Po(d) number of constraints closes over the counts of constraint
// "types" (one type per (P atom, ordered parent-atom tuple)), so the sum
// runs over integer count vectors instead of Monte-Carlo samples

struct ExactBetheConfig {
  int gamma_max = 60;        // Poisson truncation cap (also adapted to d)
  double budget = 4e7;       // max count vectors enumerated
};

inline double bethe_exact_atoms(double d, const ModelSpec& P,
                                const std::vector<std::pair<double, std::vector<double>>>& pi,
                                ExactBetheConfig cfg = {}) {
  if (P.support_kind != SupportKind::Finite)
    throw std::invalid_argument("exact Bethe evaluation needs finite support");
  const int q = P.q(), k = P.k;
  const double xi = P.xi(), ln_xi = std::log(xi);
  const int A = static_cast<int>(P.atoms.size());
  const int B = static_cast<int>(pi.size());

  // enumerate types: (P atom) x (ordered tuple of k-1 parent atoms)
  long n_parent_tuples = 1;
  for (int i = 0; i < k - 1; ++i) n_parent_tuples *= B;
  const long T = A * n_parent_tuples;
  std::vector<double> type_prob(T);
  std::vector<std::vector<double>> type_f(T);  // f_t(sigma)
  {
    std::vector<const std::vector<double>*> parents(k - 1);
    std::vector<double> factor(q);
    for (int a = 0; a < A; ++a)
      for (long pt = 0; pt < n_parent_tuples; ++pt) {
        long rest = pt;
        double prob = P.atoms[a].first;
        for (int j = 0; j < k - 1; ++j) {
          const int b = static_cast<int>(rest % B);
          rest /= B;
          parents[j] = &pi[b].second;
          prob *= pi[b].first;
        }
        detail::cavity_factor(P.atoms[a].second, parents, factor);
        const long t = a * n_parent_tuples + pt;
        type_prob[t] = prob;
        type_f[t] = factor;
      }
  }
  std::vector<std::vector<double>> type_logf(T, std::vector<double>(q));
  for (long t = 0; t < T; ++t)
    for (int s = 0; s < q; ++s) type_logf[t][s] = std::log(type_f[t][s]);

  // first term: recursive enumeration of count vectors with total <= gamma_max;
  // the weight of a count vector c is e^{-d} d^gamma/gamma! * multinomial(c) *
  // prod type_prob^c = e^{-d} prod_t (d p_t)^{c_t} / c_t!
  const int gamma_max =
      std::min(cfg.gamma_max, static_cast<int>(std::ceil(d + 12.0 * std::sqrt(d) + 10.0)));
  double term1 = 0.0, term1_err = 0.0;  // compensated: the signal can be ~1e-9
  double enumerated = 0.0;
  const double ln_d = std::log(d);
  std::vector<double> logf_acc(q, 0.0);
  auto emit = [&](long gamma, double log_w) {
    const double w = std::exp(-d + log_w);
    const double ln_sum = log_sum_exp(logf_acc);
    const double term =
        w * std::exp(ln_sum - std::log(static_cast<double>(q)) - gamma * ln_xi) * ln_sum;
    const double y = term - term1_err;
    const double t = term1 + y;
    term1_err = (t - term1) - y;
    term1 = t;
  };
  // depth-first over types
  struct Rec {
    long T;
    int gamma_max;
    double budget;
    double* enumerated;
    const std::vector<double>* type_prob;
    const std::vector<std::vector<double>>* type_logf;
    std::vector<double>* logf_acc;
    double ln_d;
    int q;
    std::function<void(long, double)> emit;

    void go(long t, long gamma, double log_w) {
      *enumerated += 1.0;
      if (*enumerated > budget) throw std::runtime_error("exact Bethe budget exceeded");
      if (t == T) {
        emit(gamma, log_w);
        return;
      }
      // c_t = 0 branch first
      go(t + 1, gamma, log_w);
      double lw = log_w;
      for (long c = 1; gamma + c <= gamma_max; ++c) {
        lw += ln_d + std::log((*type_prob)[t]) - std::log(static_cast<double>(c));
        for (int s = 0; s < q; ++s) (*logf_acc)[s] += (*type_logf)[t][s];
        go(t + 1, gamma + c, lw);
        // the accumulated logs for larger c stay; undo after the loop
      }
      // undo all logf contributions of this type
      long c_applied = 0;
      for (long c = 1; gamma + c <= gamma_max; ++c) ++c_applied;
      for (int s = 0; s < q; ++s) (*logf_acc)[s] -= c_applied * (*type_logf)[t][s];
    }
  };
  Rec rec{T, gamma_max, cfg.budget, &enumerated, &type_prob, &type_logf,
          &logf_acc, ln_d, q, emit};
  rec.go(0, 0, 0.0);

  // second term: exact finite sum over (P atom, k parent atoms)
  double term2 = 0.0;
  {
    std::vector<const std::vector<double>*> parents(k);
    long n_tuples_k = 1;
    for (int i = 0; i < k; ++i) n_tuples_k *= B;
    for (int a = 0; a < A; ++a)
      for (long pt = 0; pt < n_tuples_k; ++pt) {
        long rest = pt;
        double prob = P.atoms[a].first;
        for (int j = 0; j < k; ++j) {
          const int b = static_cast<int>(rest % B);
          rest /= B;
          parents[j] = &pi[b].second;
          prob *= pi[b].first;
        }
        term2 += prob * lambda_xlnx(detail::edge_term_inner(P.atoms[a].second, parents));
      }
    term2 *= d * (k - 1) / (k * xi);
  }
  return term1 - term2;
}

// ---------------------------------------------------------------------------
// specialized displayed formulas for the built-in models

inline BetheEstimate bethe_closed_forms(const ModelSpec& P, double d, const Population& pi,
                                        long n_mc, Rng& rng) {
  const int q = P.q(), k = P.k;
  RunningStat st;
  auto draw = [&]() -> const std::vector<double>& {
    return pi.points[rng.unif_int(pi.points.size())];
  };
  if (P.family == ModelFamily::Potts) {
    const double e = std::exp(-P.beta);
    const double xi = 1.0 - (1.0 - e) / q;
    for (long i = 0; i < n_mc; ++i) {
      const long gamma = rng.poisson(d);
      std::vector<double> prod_log(q, 0.0);
      for (long c = 0; c < gamma; ++c) {
        const auto& rho = draw();
        for (int s = 0; s < q; ++s) prod_log[s] += std::log(1.0 - (1.0 - e) * rho[s]);
      }
      const double ln_sum = log_sum_exp(prod_log);
      const double term1 =
          std::exp(ln_sum - std::log(static_cast<double>(q)) - gamma * std::log(xi)) * ln_sum;
      const auto& r1 = draw();
      const auto& r2 = draw();
      double dot = 0.0;
      for (int s = 0; s < q; ++s) dot += r1[s] * r2[s];
      const double term2 = d / 2.0 * lambda_xlnx(1.0 - (1.0 - e) * dot) / xi;
      st.add(term1 - term2);
    }
  } else if (P.family == ModelFamily::GaussianKSpin || P.family == ModelFamily::Xorsat) {
    // tanh/cosh form over the magnetizations m = rho(+1) - rho(-1)
    for (long i = 0; i < n_mc; ++i) {
      const long gamma = rng.poisson(d);
      double log_plus = 0.0, log_minus = 0.0;
      for (long c = 0; c < gamma; ++c) {
        const double t = P.family == ModelFamily::Xorsat
                             ? (rng.bernoulli(0.5) ? std::tanh(P.beta) : -std::tanh(P.beta))
                             : std::tanh(rng.normal() * P.beta);
        double mprod = 1.0;
        for (int j = 0; j < k - 1; ++j) {
          const auto& rho = draw();
          mprod *= rho[0] - rho[1];
        }
        log_plus += std::log1p(t * mprod);
        log_minus += std::log1p(-t * mprod);
      }
      const double ln_sum = log_sum_exp({log_plus, log_minus});
      const double term1 = std::exp(ln_sum - std::log(2.0)) * ln_sum;
      const double t = P.family == ModelFamily::Xorsat
                           ? (rng.bernoulli(0.5) ? std::tanh(P.beta) : -std::tanh(P.beta))
                           : std::tanh(rng.normal() * P.beta);
      double mprod = 1.0;
      for (int j = 0; j < k; ++j) {
        const auto& rho = draw();
        mprod *= rho[0] - rho[1];
      }
      const double term2 = d * (k - 1) / k * lambda_xlnx(1.0 + t * mprod);
      st.add(term1 - term2);
    }
  } else {
    throw std::invalid_argument("closed forms exist for Potts and k-spin families only");
  }
  return {st.mean, st.se(), st.n, d, bethe_threshold(P, d)};
}

// ---------------------------------------------------------------------------
// population dynamics: distributional BP update whose fixed points are the
// stationary points of the Bethe functional

struct PopulationConfig {
  long n_points = 10000;
  int sweeps = 200;
  int avg_last = 50;
  long n_mc = 20000;
  double eps_bal = 1e-3;
};

inline Population population_step(const Population& pi, double d, const ModelSpec& P,
                                  Rng& rng, double eps_bal = 1e-3) {
  const int q = pi.q, k = P.k;
  const long N = static_cast<long>(pi.points.size());
  const double xi = P.xi();
  std::vector<std::vector<double>> cand(N, std::vector<double>(q));
  std::vector<double> weight(N);
  WeightFunction scratch;
  std::vector<const std::vector<double>*> parents(k - 1);
  std::vector<double> factor(q), logf(q);
  for (long i = 0; i < N; ++i) {
    const long gamma = rng.poisson(d);
    std::fill(logf.begin(), logf.end(), 0.0);
    for (long c = 0; c < gamma; ++c) {
      const WeightFunction& psi = P.sample_weight_ref(rng, scratch);
      for (int j = 0; j < k - 1; ++j)
        parents[j] = &pi.points[rng.unif_int(pi.points.size())];
      detail::cavity_factor(psi, parents, factor);
      for (int s = 0; s < q; ++s) logf[s] += std::log(factor[s]);
    }
    const double lse = log_sum_exp(logf);
    for (int s = 0; s < q; ++s) cand[i][s] = std::exp(logf[s] - lse);
    // size-bias: normalization over q / xi^gamma
    weight[i] = std::exp(lse - std::log(static_cast<double>(q)) - gamma * std::log(xi));
  }
  // systematic resampling proportional to the weights
  Population out;
  out.q = q;
  out.points.resize(N);
  double wsum = 0.0;
  for (double w : weight) wsum += w;
  const double step = wsum / N;
  double pos = rng.unif() * step;
  double acc = 0.0;
  long src = 0;
  for (long i = 0; i < N; ++i) {
    while (acc + weight[src] < pos && src + 1 < N) {
      acc += weight[src];
      ++src;
    }
    out.points[i] = cand[src];
    pos += step;
  }
  out.recenter(eps_bal);
  return out;
}

struct DcondPoint {
  double d = 0.0;
  double sup_b = 0.0;
  double se = 0.0;
  double threshold = 0.0;
  double gap = 0.0;
  bool converged = true;
  double polarization = 0.0;  // mean point TV from uniform of the winning run
};

struct DcondScan {
  std::vector<DcondPoint> points;
  double bracket_lo = 0.0;
  double bracket_hi = std::numeric_limits<double>::infinity();
};

// per grid degree: run population dynamics from the uniform atom and from a
// polarized start, keep the larger stationary Bethe estimate; the result is
// a heuristic lower bound on sup_pi B
inline DcondScan dcond_scan(const ModelSpec& P, const std::vector<double>& d_grid,
                            const PopulationConfig& cfg, Rng& rng, int workers = 1) {
  for (std::size_t i = 1; i < d_grid.size(); ++i)
    if (d_grid[i] <= d_grid[i - 1]) throw std::invalid_argument("d grid must be sorted");
  DcondScan scan;
  for (double d : d_grid) {
    DcondPoint pt;
    pt.d = d;
    pt.threshold = bethe_threshold(P, d);
    double best = -1e300, best_se = 0.0, best_pol = 0.0;
    bool best_conv = true;
    for (int init = 0; init < 2; ++init) {
      Population pi = init == 0 ? Population::uniform_atom(P.q(), cfg.n_points)
                                : Population::polarized(P.q(), cfg.n_points);
      std::vector<double> tail;
      for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
        pi = population_step(pi, d, P, rng, cfg.eps_bal);
        if (sweep >= cfg.sweeps - cfg.avg_last)
          tail.push_back(bethe_estimate(d, P, pi, cfg.n_mc, rng, workers).value);
      }
      // sweep-block bootstrap standard error over the averaged tail
      const int blocks = 10;
      const int per = static_cast<int>(tail.size()) / blocks;
      RunningStat bs;
      for (int b = 0; b < blocks; ++b) {
        double m = 0.0;
        for (int j = 0; j < per; ++j) m += tail[b * per + j];
        bs.add(m / per);
      }
      const double est = bs.mean;
      const double se = bs.se();
      // flag drift between the two halves of the tail
      double first = 0.0, second = 0.0;
      for (std::size_t j = 0; j < tail.size() / 2; ++j) first += tail[j];
      for (std::size_t j = tail.size() / 2; j < tail.size(); ++j) second += tail[j];
      first /= tail.size() / 2;
      second /= tail.size() - tail.size() / 2;
      const bool conv = std::abs(second - first) <= 5 * se + 1e-9;
      if (est > best) {
        best = est;
        best_se = se;
        best_conv = conv;
        best_pol = pi.mean_point_tv_from_uniform();
      }
    }
    pt.sup_b = best;
    pt.se = best_se;
    pt.gap = best - pt.threshold;
    pt.converged = best_conv;
    pt.polarization = best_pol;
    scan.points.push_back(pt);
  }
  scan.bracket_lo = 0.0;
  scan.bracket_hi = std::numeric_limits<double>::infinity();
  for (const auto& pt : scan.points) {
    if (pt.gap > 3 * pt.se) {
      scan.bracket_hi = pt.d;
      break;
    }
    scan.bracket_lo = pt.d;
  }
  return scan;
}

// ---------------------------------------------------------------------------
// fourth-order expansion check: B(d,P,pi_eps) - B(d,P,pi_0) against the
// predicted (d(k-1)/12)((k-1) d lambda^2 - lambda) eps^4 term

struct TaylorRow {
  double eps = 0.0;
  double observed = 0.0;  // B(pi_eps) - B(pi_0)
  double predicted = 0.0;
  double ratio = 0.0;
  double se = 0.0;  // zero on the exact path
};

inline std::vector<TaylorRow> taylor_expansion_check(double d, const ModelSpec& P,
                                                     const PerturbationFamily& fam,
                                                     const std::vector<double>& eps_list,
                                                     Rng& rng, long n_mc = 0, int workers = 1) {
  const int q = P.q();
  std::vector<TaylorRow> rows;
  const bool exact = P.support_kind == SupportKind::Finite && n_mc == 0;
  double b0, b0_se = 0.0;
  if (exact) {
    b0 = bethe_exact_atoms(d, P, {{1.0, std::vector<double>(q, 1.0 / q)}});
  } else {
    const auto est = bethe_estimate(d, P, Population::uniform_atom(q, 1), n_mc, rng, workers);
    b0 = est.value;
    b0_se = est.se;
  }
  for (double eps : eps_list) {
    if (eps >= fam.eps0)
      throw std::invalid_argument("eps above the admissible perturbation range");
    TaylorRow row;
    row.eps = eps;
    row.predicted = taylor_eps4_coefficient(d, P.k, fam.lambda_hat) * std::pow(eps, 4);
    if (exact) {
      std::vector<std::pair<double, std::vector<double>>> atoms;
      for (int w = 0; w < q; ++w) atoms.emplace_back(1.0 / q, fam.pi_eps(eps, w));
      row.observed = bethe_exact_atoms(d, P, atoms) - b0;
      row.se = 0.0;
    } else {
      Population pi;
      pi.q = q;
      for (int w = 0; w < q; ++w) pi.points.push_back(fam.pi_eps(eps, w));
      const auto est = bethe_estimate(d, P, pi, n_mc, rng, workers);
      row.observed = est.value - b0;
      row.se = std::sqrt(est.se * est.se + b0_se * b0_se);
    }
    row.ratio = row.predicted != 0.0 ? row.observed / row.predicted : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace factorphase
