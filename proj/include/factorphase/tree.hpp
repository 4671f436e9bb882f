#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "graphs.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace factorphase {

// rooted alternating factor tree, truncated at depth 2*levels in the
// bipartite metric (levels counted in variable generations)
struct FactorTree {
  int q = 2;
  int k = 2;
  int levels = 0;

  struct Var {
    long parent_con = -1;
    int depth = 0;  // variable level, root = 0
  };
  struct Con {
    long parent_var = -1;
    int parent_pos = 0;              // root-facing position in the ordered tuple
    std::vector<long> tuple;         // k variable ids, parent included
    std::uint32_t weight = 0;
  };
  std::vector<Var> vars;
  std::vector<Con> cons;
  std::vector<WeightFunction> weights;

  long n_vars() const { return static_cast<long>(vars.size()); }
};

inline FactorTree gen_gw_tree(double d, const ModelSpec& P, int levels, Rng& rng) {
  if (levels < 0) throw std::invalid_argument("levels >= 0 required");
  FactorTree t;
  t.q = P.q();
  t.k = P.k;
  t.levels = levels;
  t.vars.push_back({-1, 0});
  std::vector<long> frontier{0};
  for (int depth = 0; depth < levels; ++depth) {
    std::vector<long> next;
    for (long v : frontier) {
      const long n_children = rng.poisson(d);
      for (long c = 0; c < n_children; ++c) {
        FactorTree::Con con;
        con.parent_var = v;
        con.parent_pos = static_cast<int>(rng.unif_int(P.k));
        con.weight = static_cast<std::uint32_t>(t.weights.size());
        t.weights.push_back(P.sample_weight(rng));
        con.tuple.resize(P.k);
        for (int i = 0; i < P.k; ++i) {
          if (i == con.parent_pos) {
            con.tuple[i] = v;
          } else {
            con.tuple[i] = t.n_vars();
            t.vars.push_back({static_cast<long>(t.cons.size()), depth + 1});
            next.push_back(con.tuple[i]);
          }
        }
        t.cons.push_back(std::move(con));
      }
    }
    frontier = std::move(next);
  }
  return t;
}

inline FactorGraph to_factor_graph(const FactorTree& t) {
  FactorGraph g;
  g.n = t.n_vars();
  g.k = t.k;
  g.q = t.q;
  g.weights = t.weights;
  for (const auto& c : t.cons) {
    std::vector<std::uint32_t> tuple(c.tuple.begin(), c.tuple.end());
    g.neighbors.insert(g.neighbors.end(), tuple.begin(), tuple.end());
    g.weight_index.push_back(c.weight);
  }
  return g;
}

struct BroadcastRun {
  Assignment spins;  // per tree variable
  int root_spin = 0;
};

// top-down generation: children tuples weighted by the constraint function
// given the parent spin
inline BroadcastRun broadcast(const FactorTree& t, int fixed_root, Rng& rng) {
  BroadcastRun run;
  run.spins.assign(t.n_vars(), -1);
  run.root_spin = fixed_root >= 0 ? fixed_root : static_cast<int>(rng.unif_int(t.q));
  run.spins[0] = run.root_spin;
  const int q = t.q, k = t.k;
  std::vector<int> tau(k);
  // constraints were appended level by level, so parents precede children
  std::vector<double> w;
  for (const auto& con : t.cons) {
    const int ps = run.spins[con.parent_var];
    long total = 1;
    for (int i = 0; i < k - 1; ++i) total *= q;
    w.assign(total, 0.0);
    const auto& psi = t.weights[con.weight];
    for (long e = 0; e < total; ++e) {
      long rest = e;
      for (int i = 0; i < k; ++i) {
        if (i == con.parent_pos) {
          tau[i] = ps;
        } else {
          tau[i] = static_cast<int>(rest % q);
          rest /= q;
        }
      }
      w[e] = psi(tau);
    }
    long pick = rng.discrete(w.data(), static_cast<int>(total));
    for (int i = 0; i < k; ++i) {
      if (i == con.parent_pos) continue;
      run.spins[con.tuple[i]] = static_cast<int>(pick % q);
      pick /= q;
    }
  }
  return run;
}

// exact probability of a full broadcast outcome with uniform root law
inline double broadcast_log_prob(const FactorTree& t, const Assignment& spins) {
  const int q = t.q, k = t.k;
  double lp = -std::log(static_cast<double>(q));
  std::vector<int> tau(k);
  for (const auto& con : t.cons) {
    const auto& psi = t.weights[con.weight];
    const int ps = spins[con.parent_var];
    double norm = 0.0;
    long total = 1;
    for (int i = 0; i < k - 1; ++i) total *= q;
    for (long e = 0; e < total; ++e) {
      long rest = e;
      for (int i = 0; i < k; ++i) {
        if (i == con.parent_pos) {
          tau[i] = ps;
        } else {
          tau[i] = static_cast<int>(rest % q);
          rest /= q;
        }
      }
      norm += psi(tau);
    }
    for (int i = 0; i < k; ++i) tau[i] = spins[con.tuple[i]];
    lp += std::log(psi(tau)) - std::log(norm);
  }
  return lp;
}

// exact conditional root marginal given the spins of the variables at
// depth == boundary_level (leaf-to-root dynamic programming, normalized per
// node)
inline std::vector<double> root_posterior(const FactorTree& t, const Assignment& boundary,
                                          int boundary_level) {
  const int q = t.q, k = t.k;
  std::vector<std::vector<double>> vmsg(t.n_vars());
  // process variables deepest-first; vars were appended level by level
  for (long v = t.n_vars() - 1; v >= 0; --v) {
    if (t.vars[v].depth == boundary_level) {
      std::vector<double> m(q, 0.0);
      if (boundary[v] < 0) throw std::invalid_argument("boundary spin missing");
      m[boundary[v]] = 1.0;
      vmsg[v] = std::move(m);
    } else {
      vmsg[v].assign(q, 1.0);
    }
  }
  std::vector<int> tau(k);
  for (long c = static_cast<long>(t.cons.size()) - 1; c >= 0; --c) {
    const auto& con = t.cons[c];
    if (t.vars[con.parent_var].depth >= boundary_level) continue;  // below the boundary
    const auto& psi = t.weights[con.weight];
    std::vector<double> out(q, 0.0);
    long total = 1;
    for (int i = 0; i < k - 1; ++i) total *= q;
    for (long e = 0; e < total; ++e) {
      long rest = e;
      double prod = 1.0;
      for (int i = 0; i < k; ++i) {
        if (i == con.parent_pos) continue;
        const int s = static_cast<int>(rest % q);
        rest /= q;
        tau[i] = s;
        prod *= vmsg[con.tuple[i]][s];
      }
      if (prod == 0.0) continue;
      for (int s = 0; s < q; ++s) {
        tau[con.parent_pos] = s;
        out[s] += prod * psi(tau);
      }
    }
    double norm = 0.0;
    for (double x : out) norm += x;
    if (norm <= 0.0) throw std::runtime_error("vanishing tree message");
    auto& pm = vmsg[con.parent_var];
    for (int s = 0; s < q; ++s) pm[s] *= out[s] / norm;
    // renormalize the accumulating product
    double pnorm = 0.0;
    for (double x : pm) pnorm += x;
    for (double& x : pm) x /= pnorm;
  }
  double norm = 0.0;
  for (double x : vmsg[0]) norm += x;
  for (double& x : vmsg[0]) x /= norm;
  return vmsg[0];
}

namespace detail {

// one corr* observation: generate the tree, broadcast and compute the root
// posterior in a single depth-first recursion, so deep supercritical trees
// are never materialized; per-depth frames keep the inner loop allocation-free
struct StreamingCorr {
  double d;
  const ModelSpec* P;
  int ell;
  Rng* rng;
  int q, k;

  struct Frame {
    std::vector<double> msg, out, w;
    std::vector<double> kid;  // (k) x q child messages, flattened
    std::vector<int> tau, child_spin;
    WeightFunction psi_scratch;
  };
  std::vector<Frame> frames;

  void init_frames() {
    long total = 1;
    for (int i = 0; i < k - 1; ++i) total *= q;
    frames.assign(ell + 1, {});
    for (auto& f : frames) {
      f.msg.assign(q, 0.0);
      f.out.assign(q, 0.0);
      f.w.assign(total, 0.0);
      f.kid.assign(static_cast<std::size_t>(k) * q, 0.0);
      f.tau.assign(k, 0);
      f.child_spin.assign(k, -1);
    }
  }

  // computes frames[depth].msg, the normalized posterior message of a node
  // with broadcast spin `spin`
  void message(int depth, int spin) {
    Frame& f = frames[depth];
    if (depth == ell) {
      std::fill(f.msg.begin(), f.msg.end(), 0.0);
      f.msg[spin] = 1.0;
      return;
    }
    std::fill(f.msg.begin(), f.msg.end(), 1.0 / q);
    const long n_children = rng->poisson(d);
    long total = 1;
    for (int i = 0; i < k - 1; ++i) total *= q;
    for (long c = 0; c < n_children; ++c) {
      const WeightFunction& psi = P->sample_weight_ref(*rng, f.psi_scratch);
      const int ppos = static_cast<int>(rng->unif_int(k));
      // broadcast the children tuple given this node's spin
      for (long e = 0; e < total; ++e) {
        long rest = e;
        for (int i = 0; i < k; ++i) {
          if (i == ppos) {
            f.tau[i] = spin;
          } else {
            f.tau[i] = static_cast<int>(rest % q);
            rest /= q;
          }
        }
        f.w[e] = psi(f.tau);
      }
      long pick = rng->discrete(f.w.data(), static_cast<int>(total));
      for (int i = 0; i < k; ++i) {
        if (i == ppos) continue;
        f.child_spin[i] = static_cast<int>(pick % q);
        pick /= q;
      }
      // recurse; each child's message is copied into this frame
      for (int i = 0; i < k; ++i) {
        if (i == ppos) continue;
        message(depth + 1, f.child_spin[i]);
        for (int s = 0; s < q; ++s) f.kid[static_cast<std::size_t>(i) * q + s] =
            frames[depth + 1].msg[s];
      }
      // constraint-to-parent message
      std::fill(f.out.begin(), f.out.end(), 0.0);
      for (long e = 0; e < total; ++e) {
        long rest = e;
        double prod = 1.0;
        for (int i = 0; i < k; ++i) {
          if (i == ppos) continue;
          const int s = static_cast<int>(rest % q);
          rest /= q;
          f.tau[i] = s;
          prod *= f.kid[static_cast<std::size_t>(i) * q + s];
        }
        if (prod == 0.0) continue;
        for (int s = 0; s < q; ++s) {
          f.tau[ppos] = s;
          f.out[s] += prod * psi(f.tau);
        }
      }
      double mnorm = 0.0;
      for (int s = 0; s < q; ++s) {
        f.msg[s] *= f.out[s];
        mnorm += f.msg[s];
      }
      for (double& x : f.msg) x /= mnorm;
    }
  }

  double observe() {
    if (frames.empty()) init_frames();
    const int root = static_cast<int>(rng->unif_int(q));
    message(0, root);
    const auto& post = frames[0].msg;
    double norm = 0.0;
    for (double x : post) norm += x;
    double corr = 0.0;
    for (int s = 0; s < q; ++s) corr += std::abs(post[s] / norm - 1.0 / q);
    return corr;
  }
};

// pairwise-model fast path (k = 2, one weight atom): the broadcast channel
// and the message update close over the q x q table, no tuple enumeration
struct StreamingCorrPotts {
  double d;
  int ell;
  Rng* rng;
  int q;
  double e_beta;       // exp(-beta)
  double p_same;       // e^-b / (q-1+e^-b)
  std::vector<std::vector<double>> msgs;  // per depth

  void init() {
    msgs.assign(ell + 1, std::vector<double>(q, 0.0));
  }

  void message(int depth, int spin) {
    auto& msg = msgs[depth];
    if (depth == ell) {
      std::fill(msg.begin(), msg.end(), 0.0);
      msg[spin] = 1.0;
      return;
    }
    std::fill(msg.begin(), msg.end(), 1.0 / q);
    const long n_children = rng->poisson(d);
    for (long c = 0; c < n_children; ++c) {
      int child = spin;
      if (!rng->bernoulli(p_same)) {
        child = static_cast<int>(rng->unif_int(q - 1));
        if (child >= spin) ++child;
      }
      message(depth + 1, child);
      const auto& kid = msgs[depth + 1];
      double ksum = 0.0;
      for (int s = 0; s < q; ++s) ksum += kid[s];
      double mnorm = 0.0;
      for (int s = 0; s < q; ++s) {
        msg[s] *= ksum - (1.0 - e_beta) * kid[s];
        mnorm += msg[s];
      }
      const double inv = 1.0 / mnorm;
      for (double& x : msg) x *= inv;
    }
  }

  double observe() {
    if (msgs.empty()) init();
    const int root = static_cast<int>(rng->unif_int(q));
    message(0, root);
    const auto& post = msgs[0];
    double norm = 0.0;
    for (double x : post) norm += x;
    double corr = 0.0;
    for (int s = 0; s < q; ++s) corr += std::abs(post[s] / norm - 1.0 / q);
    return corr;
  }
};

}  // namespace detail

// corr*(d) at depth ell: mean over trees and broadcast runs of
// sum_s |posterior(s) - 1/q| at the root; tree-level parallelism with
// per-task streams keeps results independent of the worker count
inline ValueWithSE corr_star(double d, const ModelSpec& P, int ell, long n_trees, Rng& rng,
                             int workers = 1, long trees_per_task = 16) {
  const std::uint64_t base = rng.u64();
  const long n_tasks = (n_trees + trees_per_task - 1) / trees_per_task;
  std::vector<RunningStat> parts(n_tasks);
  const bool potts_fast = P.family == ModelFamily::Potts && P.k == 2;
  parallel_tasks(n_tasks, workers, [&](long task) {
    Rng trng = Rng::stream(base, static_cast<std::uint64_t>(task));
    const long lo = task * trees_per_task;
    const long hi = std::min(n_trees, lo + trees_per_task);
    if (potts_fast) {
      const double e = std::exp(-P.beta);
      detail::StreamingCorrPotts sc{d, ell, &trng, P.q(), e, e / (P.q() - 1 + e), {}};
      for (long i = lo; i < hi; ++i) parts[task].add(sc.observe());
    } else {
      detail::StreamingCorr sc{d, &P, ell, &trng, P.q(), P.k, {}};
      for (long i = lo; i < hi; ++i) parts[task].add(sc.observe());
    }
  });
  RunningStat st;
  for (const auto& p : parts) st.merge(p);
  return {st.mean, st.se(), st.n};
}

struct CorrPoint {
  double d = 0.0;
  int ell = 0;
  double estimate = 0.0;
  double se = 0.0;
};

struct DrecScan {
  std::vector<CorrPoint> points;
  std::vector<int> verdicts;       // per grid d: 1 = declared positive
  double bracket_lo = 0.0;         // last degree not declared positive
  double bracket_hi = std::numeric_limits<double>::infinity();
  double d_ks = std::numeric_limits<double>::infinity();  // reported alongside
};

// plateau rule: three consecutive depths with estimates above 3 se and
// pairwise differences below 2 se (of the difference)
inline bool corr_plateau_positive(const std::vector<CorrPoint>& pts) {
  const int run = 3;
  for (std::size_t i = 0; i + run <= pts.size(); ++i) {
    bool ok = true;
    for (std::size_t a = i; a < i + run && ok; ++a)
      if (pts[a].estimate <= 3.0 * pts[a].se) ok = false;
    for (std::size_t a = i; a < i + run && ok; ++a)
      for (std::size_t b = a + 1; b < i + run && ok; ++b) {
        const double se_diff = std::sqrt(pts[a].se * pts[a].se + pts[b].se * pts[b].se);
        if (std::abs(pts[a].estimate - pts[b].estimate) >= 2.0 * se_diff) ok = false;
      }
    if (ok) return true;
  }
  return false;
}

inline DrecScan drec_scan(const ModelSpec& P, const std::vector<double>& d_grid,
                          const std::vector<int>& ell_schedule, long n_trees, Rng& rng,
                          double d_ks = std::numeric_limits<double>::infinity(),
                          int workers = 1) {
  for (std::size_t i = 1; i < d_grid.size(); ++i)
    if (d_grid[i] <= d_grid[i - 1]) throw std::invalid_argument("d grid must be sorted");
  DrecScan scan;
  scan.d_ks = d_ks;
  for (double d : d_grid) {
    std::vector<CorrPoint> pts;
    for (int ell : ell_schedule) {
      const auto est = corr_star(d, P, ell, n_trees, rng, workers);
      pts.push_back({d, ell, est.value, est.se});
      scan.points.push_back(pts.back());
    }
    scan.verdicts.push_back(corr_plateau_positive(pts) ? 1 : 0);
  }
  scan.bracket_lo = 0.0;
  scan.bracket_hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d_grid.size(); ++i) {
    if (scan.verdicts[i]) {
      scan.bracket_hi = d_grid[i];
      break;
    }
    scan.bracket_lo = d_grid[i];
  }
  return scan;
}

}  // namespace factorphase
