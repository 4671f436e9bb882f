#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "graphs.hpp"
#include "stats.hpp"

namespace factorphase {

struct GibbsExact {
  double log_z = 0.0;
  std::vector<std::vector<double>> marginals;  // optional, per variable
  std::vector<double> full_table;              // optional, q^n probabilities
};

namespace detail {

struct Component {
  std::vector<long> vars;  // sorted
  std::vector<long> cons;  // sorted
  std::vector<long> fvs;   // feedback variables, conditioned on exhaustively
};

// exact Gibbs computations on one factor graph: connected components are
// conditioned on a greedy feedback vertex set, the rest is forest DP
class GibbsSolver {
 public:
  explicit GibbsSolver(const FactorGraph& g, double budget = double(1 << 26)) : g_(&g) {
    build_views();
    build_components(budget);
    scratch_.assign(g.n, -1);
  }

  const std::vector<Component>& components() const { return comps_; }
  long component_of(long v) const { return comp_of_var_[v]; }

  double log_partition(const std::vector<int>* clamp = nullptr) const {
    double total = 0.0, err = 0.0;
    for (const auto& c : comps_) {
      const double y = comp_log_z(c, clamp, nullptr, nullptr) - err;
      const double t = total + y;  // compensated summation across components
      err = (t - total) - y;
      total = t;
    }
    return total;
  }

  Assignment sample(Rng& rng, const std::vector<int>* clamp = nullptr) const {
    Assignment out(g_->n, 0);
    if (clamp)
      for (long v = 0; v < g_->n; ++v)
        if ((*clamp)[v] >= 0) out[v] = (*clamp)[v];
    for (const auto& c : comps_) comp_log_z(c, clamp, &out, &rng);
    return out;
  }

  // conditional marginal of a variable, by pinning each spin in turn
  std::vector<double> marginal(long v, const std::vector<int>* clamp = nullptr) const {
    const int q = g_->q;
    if (clamp && (*clamp)[v] >= 0) {
      std::vector<double> p(q, 0.0);
      p[(*clamp)[v]] = 1.0;
      return p;
    }
    const auto& c = comps_[comp_of_var_[v]];
    std::vector<double> logz(q);
    for (int s = 0; s < q; ++s) {
      pin_ = {v, s};
      logz[s] = comp_log_z(c, clamp, nullptr, nullptr);
    }
    pin_ = {-1, -1};
    const double lse = log_sum_exp(logz);
    std::vector<double> p(q);
    for (int s = 0; s < q; ++s) p[s] = std::exp(logz[s] - lse);
    return p;
  }

 private:
  struct ConView {
    std::vector<long> distinct;  // distinct variable ids of the constraint
  };

  const FactorGraph* g_;
  std::vector<ConView> views_;
  std::vector<Component> comps_;
  std::vector<long> comp_of_var_;
  mutable std::vector<int> scratch_;          // pinned spins, component-local use
  mutable std::pair<long, int> pin_{-1, -1};  // extra single-variable pin

  void build_views() {
    views_.resize(g_->m());
    for (long a = 0; a < g_->m(); ++a) {
      const std::uint32_t* t = g_->nb(a);
      auto& d = views_[a].distinct;
      for (int i = 0; i < g_->k; ++i)
        if (std::find(d.begin(), d.end(), static_cast<long>(t[i])) == d.end())
          d.push_back(t[i]);
    }
  }

  void build_components(double budget) {
    const long n = g_->n, m = g_->m();
    std::vector<std::vector<long>> var_cons(n);
    for (long a = 0; a < m; ++a)
      for (long v : views_[a].distinct) var_cons[v].push_back(a);

    comp_of_var_.assign(n, -1);
    std::vector<char> con_seen(m, 0);
    for (long v0 = 0; v0 < n; ++v0) {
      if (comp_of_var_[v0] >= 0) continue;
      const long cid = static_cast<long>(comps_.size());
      comps_.emplace_back();
      Component& comp = comps_.back();
      std::vector<long> stack{v0};
      comp_of_var_[v0] = cid;
      while (!stack.empty()) {
        const long v = stack.back();
        stack.pop_back();
        comp.vars.push_back(v);
        for (long a : var_cons[v]) {
          if (con_seen[a]) continue;
          con_seen[a] = 1;
          comp.cons.push_back(a);
          for (long w : views_[a].distinct)
            if (comp_of_var_[w] < 0) {
              comp_of_var_[w] = cid;
              stack.push_back(w);
            }
        }
      }
      std::sort(comp.vars.begin(), comp.vars.end());
      std::sort(comp.cons.begin(), comp.cons.end());
      pick_fvs(comp, var_cons);
      const double work = std::pow(static_cast<double>(g_->q),
                                   static_cast<double>(comp.fvs.size() + 1)) *
                          static_cast<double>(comp.vars.size() + comp.cons.size() + 1);
      if (work > budget)
        throw std::runtime_error("component too cyclic for the exact-computation budget");
    }
  }

  // peel the bipartite incidence down to its 2-core; while non-empty, move
  // the max-degree variable into the feedback set
  void pick_fvs(Component& comp, const std::vector<std::vector<long>>& var_cons) {
    const auto& vs = comp.vars;
    const auto& cs = comp.cons;
    auto vloc = [&](long v) {
      return std::lower_bound(vs.begin(), vs.end(), v) - vs.begin();
    };
    auto cloc = [&](long a) {
      return std::lower_bound(cs.begin(), cs.end(), a) - cs.begin();
    };
    std::vector<int> dv(vs.size()), dc(cs.size());
    std::vector<char> gone_v(vs.size(), 0), gone_c(cs.size(), 0);
    for (std::size_t i = 0; i < vs.size(); ++i)
      dv[i] = static_cast<int>(var_cons[vs[i]].size());
    for (std::size_t j = 0; j < cs.size(); ++j)
      dc[j] = static_cast<int>(views_[cs[j]].distinct.size());

    auto peel = [&]() {
      bool changed = true;
      while (changed) {
        changed = false;
        for (std::size_t i = 0; i < vs.size(); ++i) {
          if (gone_v[i] || dv[i] > 1) continue;
          gone_v[i] = 1;
          changed = true;
          for (long a : var_cons[vs[i]]) {
            const auto j = cloc(a);
            if (!gone_c[j]) --dc[j];
          }
        }
        for (std::size_t j = 0; j < cs.size(); ++j) {
          if (gone_c[j] || dc[j] > 1) continue;
          gone_c[j] = 1;
          changed = true;
          for (long v : views_[cs[j]].distinct) {
            const auto i = vloc(v);
            if (!gone_v[i]) --dv[i];
          }
        }
      }
    };
    peel();
    for (;;) {
      int best_deg = 0;
      long best = -1;
      for (std::size_t i = 0; i < vs.size(); ++i)
        if (!gone_v[i] && dv[i] > best_deg) {
          best_deg = dv[i];
          best = static_cast<long>(i);
        }
      if (best < 0) break;
      comp.fvs.push_back(vs[best]);
      gone_v[best] = 1;
      for (long a : var_cons[vs[best]]) {
        const auto j = cloc(a);
        if (!gone_c[j]) --dc[j];
      }
      peel();
    }
  }

  int pinned_spin(long v, const std::vector<int>* clamp) const {
    if (pin_.first == v) return pin_.second;
    if (clamp && (*clamp)[v] >= 0) return (*clamp)[v];
    return -1;
  }

  double comp_log_z(const Component& comp, const std::vector<int>* clamp,
                    Assignment* sample_out, Rng* rng) const {
    const int q = g_->q;
    std::vector<long> free_fvs;
    for (long v : comp.fvs)
      if (pinned_spin(v, clamp) < 0) free_fvs.push_back(v);
    long combos = 1;
    for (std::size_t i = 0; i < free_fvs.size(); ++i) combos *= q;

    auto& state = scratch_;
    for (long v : comp.vars) state[v] = pinned_spin(v, clamp);

    std::vector<double> combo_logz(combos);
    for (long c = 0; c < combos; ++c) {
      long rest = c;
      for (long v : free_fvs) {
        state[v] = static_cast<int>(rest % q);
        rest /= q;
      }
      combo_logz[c] = forest_log_z(comp, state, nullptr, nullptr);
    }
    const double lse = log_sum_exp(combo_logz);

    if (sample_out && rng) {
      const double target = rng->unif();
      double acc = 0.0;
      long chosen = combos - 1;
      for (long c = 0; c < combos; ++c) {
        acc += std::exp(combo_logz[c] - lse);
        if (acc >= target) {
          chosen = c;
          break;
        }
      }
      long rest = chosen;
      for (long v : free_fvs) {
        state[v] = static_cast<int>(rest % q);
        rest /= q;
      }
      forest_log_z(comp, state, sample_out, rng);
      for (long v : comp.vars)
        if (state[v] >= 0) (*sample_out)[v] = state[v];
    }
    return lse;
  }

  // one upward message pass over the forest of unpinned variables; with
  // sample_out, a downward pass draws an exact sample
  double forest_log_z(const Component& comp, std::vector<int>& state, Assignment* sample_out,
                      Rng* rng) const {
    const int q = g_->q, k = g_->k;
    const auto& vs = comp.vars;
    const auto& cs = comp.cons;
    auto vloc = [&](long v) {
      return std::lower_bound(vs.begin(), vs.end(), v) - vs.begin();
    };
    auto cloc = [&](long a) {
      return std::lower_bound(cs.begin(), cs.end(), a) - cs.begin();
    };
    double logz = 0.0;
    std::vector<int> tau(k);

    // constraints whose variables are all pinned contribute directly
    std::vector<char> con_active(cs.size(), 0);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const long a = cs[j];
      bool any_free = false;
      for (long v : views_[a].distinct)
        if (state[v] < 0) any_free = true;
      con_active[j] = any_free;
      if (!any_free) {
        const std::uint32_t* t = g_->nb(a);
        for (int i = 0; i < k; ++i) tau[i] = state[t[i]];
        logz += std::log(g_->weight(a)(tau));
      }
    }

    // BFS forest over free variables
    std::vector<char> vvis(vs.size(), 0), cvis(cs.size(), 0);
    std::vector<long> order;  // BFS order of local var indices, roots first
    std::vector<long> con_parent(cs.size(), -1);
    std::vector<char> is_root(vs.size(), 0);
    for (std::size_t r = 0; r < vs.size(); ++r) {
      if (vvis[r] || state[vs[r]] >= 0) continue;
      is_root[r] = 1;
      vvis[r] = 1;
      std::vector<long> queue{static_cast<long>(r)};
      std::size_t head = 0;
      while (head < queue.size()) {
        const long lv = queue[head++];
        order.push_back(lv);
        for (long a : cons_of_var(vs[lv])) {
          const auto lj = cloc(a);
          if (!con_active[lj] || cvis[lj]) continue;
          cvis[lj] = 1;
          con_parent[lj] = lv;
          for (long w : views_[a].distinct) {
            if (state[w] >= 0) continue;
            const auto lw = vloc(w);
            if (!vvis[lw]) {
              vvis[lw] = 1;
              queue.push_back(lw);
            }
          }
        }
      }
    }

    std::vector<std::vector<long>> var_child_cons(vs.size());
    for (std::size_t j = 0; j < cs.size(); ++j)
      if (con_parent[j] >= 0) var_child_cons[con_parent[j]].push_back(static_cast<long>(j));

    // upward pass, deepest variables first
    std::vector<std::vector<double>> cmsg(cs.size());  // constraint -> parent var
    std::vector<std::vector<double>> vmsg(vs.size());  // product of child cmsg, normalized
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const long lv = *it;
      const long v = vs[lv];
      for (long lj : var_child_cons[lv]) {
        const long a = cs[lj];
        std::vector<long> kid_vars;
        for (long w : views_[a].distinct)
          if (w != v && state[w] < 0) kid_vars.push_back(w);
        const int nk = static_cast<int>(kid_vars.size());
        long total = 1;
        for (int i = 0; i < nk; ++i) total *= q;
        std::vector<double> out(q, 0.0);
        const std::uint32_t* t = g_->nb(a);
        std::vector<int> kid_spin(nk, 0);
        for (long e = 0; e < total; ++e) {
          long rest = e;
          double w_prod = 1.0;
          for (int i = 0; i < nk; ++i) {
            kid_spin[i] = static_cast<int>(rest % q);
            rest /= q;
            w_prod *= vmsg[vloc(kid_vars[i])][kid_spin[i]];
          }
          if (w_prod == 0.0) continue;
          for (int s = 0; s < q; ++s) {
            for (int i = 0; i < k; ++i) {
              const long w = t[i];
              if (w == v)
                tau[i] = s;
              else if (state[w] >= 0)
                tau[i] = state[w];
              else
                for (int kv = 0; kv < nk; ++kv)
                  if (kid_vars[kv] == w) tau[i] = kid_spin[kv];
            }
            out[s] += w_prod * g_->weight(a)(tau);
          }
        }
        double norm = 0.0;
        for (double x : out) norm += x;
        if (norm <= 0.0) throw std::runtime_error("vanishing constraint message");
        for (double& x : out) x /= norm;
        logz += std::log(norm);
        cmsg[lj] = std::move(out);
      }
      // variable message: product over child constraints, normalized
      std::vector<double> msg(q, 1.0);
      for (long lj : var_child_cons[lv])
        for (int s = 0; s < q; ++s) msg[s] *= cmsg[lj][s];
      double norm = 0.0;
      for (double x : msg) norm += x;
      for (double& x : msg) x /= norm;
      logz += std::log(norm);
      vmsg[lv] = std::move(msg);
    }

    if (sample_out && rng) {
      std::vector<int> spin(vs.size(), -1);
      for (long lv : order)
        if (is_root[lv]) spin[lv] = rng->discrete(vmsg[lv].data(), q);
      for (long lv : order) {
        const long v = vs[lv];
        const int sv = spin[lv];
        for (long lj : var_child_cons[lv]) {
          const long a = cs[lj];
          std::vector<long> kid_vars;
          for (long w : views_[a].distinct)
            if (w != v && state[w] < 0) kid_vars.push_back(w);
          const int nk = static_cast<int>(kid_vars.size());
          if (nk == 0) continue;
          long total = 1;
          for (int i = 0; i < nk; ++i) total *= q;
          std::vector<double> jw(total, 0.0);
          const std::uint32_t* t = g_->nb(a);
          std::vector<int> kid_spin(nk, 0);
          for (long e = 0; e < total; ++e) {
            long rest = e;
            double w_prod = 1.0;
            for (int i = 0; i < nk; ++i) {
              kid_spin[i] = static_cast<int>(rest % q);
              rest /= q;
              w_prod *= vmsg[vloc(kid_vars[i])][kid_spin[i]];
            }
            if (w_prod == 0.0) continue;
            for (int i = 0; i < k; ++i) {
              const long w = t[i];
              if (w == v)
                tau[i] = sv;
              else if (state[w] >= 0)
                tau[i] = state[w];
              else
                for (int kv = 0; kv < nk; ++kv)
                  if (kid_vars[kv] == w) tau[i] = kid_spin[kv];
            }
            jw[e] = w_prod * g_->weight(a)(tau);
          }
          const long pick = rng->discrete(jw.data(), static_cast<int>(total));
          long rest = pick;
          for (int i = 0; i < nk; ++i) {
            spin[vloc(kid_vars[i])] = static_cast<int>(rest % q);
            rest /= q;
          }
        }
      }
      for (std::size_t i = 0; i < vs.size(); ++i)
        if (spin[i] >= 0) (*sample_out)[vs[i]] = spin[i];
    }
    return logz;
  }

  // incident constraints of a variable (distinct incidence), cached
  const std::vector<long>& cons_of_var(long v) const {
    if (var_cons_cache_.empty()) {
      var_cons_cache_.resize(g_->n);
      for (long a = 0; a < g_->m(); ++a)
        for (long w : views_[a].distinct) var_cons_cache_[w].push_back(a);
    }
    return var_cons_cache_[v];
  }
  mutable std::vector<std::vector<long>> var_cons_cache_;
};

}  // namespace detail

enum class PartitionMode { Enumerate, Components };

inline GibbsExact partition_exact(const FactorGraph& g, PartitionMode mode,
                                  bool want_marginals = false, bool want_table = false) {
  GibbsExact out;
  if (mode == PartitionMode::Enumerate) {
    const double states = std::pow(static_cast<double>(g.q), static_cast<double>(g.n));
    if (states > double(1 << 26)) throw std::runtime_error("enumeration budget exceeded");
    const long total = static_cast<long>(states);
    Assignment sigma(g.n, 0);
    double z = 0.0, err = 0.0;
    std::vector<std::vector<double>> marg;
    if (want_marginals) marg.assign(g.n, std::vector<double>(g.q, 0.0));
    if (want_table) out.full_table.resize(total);
    for (long idx = 0; idx < total; ++idx) {
      long rest = idx;
      for (long v = 0; v < g.n; ++v) {
        sigma[v] = static_cast<int>(rest % g.q);
        rest /= g.q;
      }
      const double w = std::exp(g.log_weight(sigma));
      if (want_table) out.full_table[idx] = w;
      if (want_marginals)
        for (long v = 0; v < g.n; ++v) marg[v][sigma[v]] += w;
      const double y = w - err;  // compensated summation
      const double t = z + y;
      err = (t - z) - y;
      z = t;
    }
    out.log_z = std::log(z);
    if (want_table)
      for (double& x : out.full_table) x /= z;
    if (want_marginals) {
      for (auto& mv : marg)
        for (double& x : mv) x /= z;
      out.marginals = std::move(marg);
    }
    return out;
  }
  detail::GibbsSolver solver(g);
  out.log_z = solver.log_partition();
  if (want_marginals) {
    out.marginals.resize(g.n);
    for (long v = 0; v < g.n; ++v) out.marginals[v] = solver.marginal(v);
  }
  return out;
}

enum class SampleMethod { Exact, Glauber };

inline std::vector<Assignment> gibbs_sample(const FactorGraph& g, long n_samples,
                                            SampleMethod method, long glauber_sweeps, Rng& rng) {
  std::vector<Assignment> out;
  out.reserve(n_samples);
  if (method == SampleMethod::Exact) {
    detail::GibbsSolver solver(g);
    for (long i = 0; i < n_samples; ++i) out.push_back(solver.sample(rng));
    return out;
  }
  // single-site heat-bath chain; exploratory only, no mixing guarantee
  std::vector<std::vector<long>> var_cons(g.n);
  for (long a = 0; a < g.m(); ++a) {
    const std::uint32_t* t = g.nb(a);
    for (int i = 0; i < g.k; ++i) var_cons[t[i]].push_back(a);
  }
  Assignment sigma(g.n);
  for (long v = 0; v < g.n; ++v) sigma[v] = static_cast<int>(rng.unif_int(g.q));
  std::vector<double> w(g.q);
  std::vector<int> tau(g.k);
  for (long s = 0; s < n_samples; ++s) {
    for (long sweep = 0; sweep < glauber_sweeps; ++sweep) {
      for (long v = 0; v < g.n; ++v) {
        for (int c = 0; c < g.q; ++c) w[c] = 1.0;
        for (long a : var_cons[v]) {
          const std::uint32_t* t = g.nb(a);
          for (int c = 0; c < g.q; ++c) {
            for (int i = 0; i < g.k; ++i) tau[i] = t[i] == static_cast<std::uint32_t>(v) ? c : sigma[t[i]];
            w[c] *= g.weight(a)(tau);
          }
        }
        sigma[v] = rng.discrete(w.data(), g.q);
      }
    }
    out.push_back(sigma);
  }
  return out;
}

// l-wise overlap: empirical joint distribution of spins under l assignments
struct OverlapMatrix {
  int q = 2;
  int l = 2;
  std::vector<double> table;  // q^l entries, little-endian in the assignments
};

inline OverlapMatrix overlap(const std::vector<const Assignment*>& sigmas, int q) {
  const int l = static_cast<int>(sigmas.size());
  if (l == 0) throw std::invalid_argument("need at least one assignment");
  const std::size_t n = sigmas[0]->size();
  for (const auto* s : sigmas)
    if (s->size() != n) throw std::invalid_argument("assignment length mismatch");
  OverlapMatrix om;
  om.q = q;
  om.l = l;
  std::size_t sz = 1;
  for (int i = 0; i < l; ++i) sz *= static_cast<std::size_t>(q);
  om.table.assign(sz, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t idx = 0, stride = 1;
    for (int i = 0; i < l; ++i) {
      idx += static_cast<std::size_t>((*sigmas[i])[v]) * stride;
      stride *= static_cast<std::size_t>(q);
    }
    om.table[idx] += 1.0 / static_cast<double>(n);
  }
  return om;
}

inline OverlapMatrix overlap_pair(const Assignment& a, const Assignment& b, int q) {
  return overlap({&a, &b}, q);
}

struct OverlapConcentration {
  double mean_tv = 0.0;
  double se = 0.0;
  long n_pairs = 0;
  double zeta = 0.0;
  bool truncation_indicator = false;  // the Z-truncation event <...>_G <= zeta
};

inline OverlapConcentration overlap_concentration(const FactorGraph& g, long n_pairs,
                                                  Rng& rng, double zeta = -1.0) {
  detail::GibbsSolver solver(g);
  RunningStat st;
  const std::size_t sz = static_cast<std::size_t>(g.q) * g.q;
  std::vector<double> unif(sz, 1.0 / static_cast<double>(sz));
  for (long i = 0; i < n_pairs; ++i) {
    const Assignment s1 = solver.sample(rng);
    const Assignment s2 = solver.sample(rng);
    st.add(tv_distance(overlap_pair(s1, s2, g.q).table, unif));
  }
  OverlapConcentration oc;
  oc.mean_tv = st.mean;
  oc.se = st.se();
  oc.n_pairs = n_pairs;
  oc.zeta = zeta > 0 ? zeta : std::pow(static_cast<double>(g.n), -1.0 / 7.0);
  oc.truncation_indicator = oc.mean_tv <= oc.zeta;
  return oc;
}

// mean over sampled variable pairs of || mu_{y1,y2} - mu_{y1} x mu_{y2} ||_TV
inline ValueWithSE pair_marginal_gap(const FactorGraph& g, long n_pairs, Rng& rng) {
  detail::GibbsSolver solver(g);
  RunningStat st;
  const int q = g.q;
  std::vector<int> clamp(g.n, -1);
  for (long t = 0; t < n_pairs; ++t) {
    const long y1 = static_cast<long>(rng.unif_int(g.n));
    long y2 = static_cast<long>(rng.unif_int(g.n));
    while (y2 == y1) y2 = static_cast<long>(rng.unif_int(g.n));
    const auto m1 = solver.marginal(y1);
    const auto m2 = solver.marginal(y2);
    std::vector<double> joint(static_cast<std::size_t>(q) * q, 0.0), prod(joint.size());
    if (solver.component_of(y1) != solver.component_of(y2)) {
      for (int s = 0; s < q; ++s)
        for (int u = 0; u < q; ++u) joint[static_cast<std::size_t>(s) * q + u] = m1[s] * m2[u];
    } else {
      for (int s = 0; s < q; ++s) {
        clamp[y1] = s;
        const auto cond = solver.marginal(y2, &clamp);
        for (int u = 0; u < q; ++u) joint[static_cast<std::size_t>(s) * q + u] = m1[s] * cond[u];
      }
      clamp[y1] = -1;
    }
    for (int s = 0; s < q; ++s)
      for (int u = 0; u < q; ++u) prod[static_cast<std::size_t>(s) * q + u] = m1[s] * m2[u];
    st.add(tv_distance(joint, prod));
  }
  return {st.mean, st.se(), st.n};
}

// point-to-set correlation at one variable: boundary spins at graph distance
// >= 2*ell drawn from the Gibbs measure, conditional root marginal exact
inline ValueWithSE corr_point_to_set(const FactorGraph& g, long y, int ell,
                                     long n_boundary_samples, Rng& rng) {
  detail::GibbsSolver solver(g);
  const int q = g.q;
  std::vector<std::vector<long>> var_cons(g.n);
  for (long a = 0; a < g.m(); ++a) {
    const std::uint32_t* t = g.nb(a);
    for (int i = 0; i < g.k; ++i) var_cons[t[i]].push_back(a);
  }
  std::vector<long> vdist(g.n, -1), cdist(g.m(), -1);
  std::vector<long> queue{y};
  vdist[y] = 0;
  std::size_t head = 0;
  while (head < queue.size()) {
    const long v = queue[head++];
    for (long a : var_cons[v]) {
      if (cdist[a] >= 0) continue;
      cdist[a] = vdist[v] + 1;
      const std::uint32_t* t = g.nb(a);
      for (int i = 0; i < g.k; ++i)
        if (vdist[t[i]] < 0) {
          vdist[t[i]] = cdist[a] + 1;
          queue.push_back(t[i]);
        }
    }
  }
  std::vector<long> boundary;
  for (long v = 0; v < g.n; ++v)
    if (vdist[v] >= 2L * ell) boundary.push_back(v);
  RunningStat st;
  std::vector<int> clamp(g.n, -1);
  for (long s = 0; s < n_boundary_samples; ++s) {
    std::fill(clamp.begin(), clamp.end(), -1);
    if (!boundary.empty()) {
      const Assignment sigma = solver.sample(rng);
      for (long v : boundary) clamp[v] = sigma[v];
    }
    const auto post = solver.marginal(y, &clamp);
    double corr = 0.0;
    for (int c = 0; c < q; ++c) corr += std::abs(post[c] - 1.0 / q);
    st.add(corr);
  }
  return {st.mean, st.se(), st.n};
}

}  // namespace factorphase
