#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "model.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace factorphase {

using Assignment = std::vector<int>;  // spins[v] in [0, q)

// Constraints carry ordered k-tuples; tuple order is semantically
// significant and preserved by every operation here.
struct FactorGraph {
  long n = 0;
  int k = 2;
  int q = 2;
  std::vector<std::uint32_t> neighbors;     // m * k, flat
  std::vector<std::uint32_t> weight_index;  // per constraint, into weights
  std::vector<WeightFunction> weights;

  long m() const { return static_cast<long>(weight_index.size()); }
  const std::uint32_t* nb(long a) const { return &neighbors[static_cast<std::size_t>(a) * k]; }
  const WeightFunction& weight(long a) const { return weights[weight_index[a]]; }

  std::uint32_t add_weight(WeightFunction w) {
    weights.push_back(std::move(w));
    return static_cast<std::uint32_t>(weights.size() - 1);
  }
  void add_constraint(const std::vector<std::uint32_t>& tuple, std::uint32_t widx) {
    neighbors.insert(neighbors.end(), tuple.begin(), tuple.end());
    weight_index.push_back(widx);
  }

  double log_weight(const Assignment& sigma) const {
    double s = 0.0;
    std::vector<int> tau(k);
    for (long a = 0; a < m(); ++a) {
      const std::uint32_t* t = nb(a);
      for (int i = 0; i < k; ++i) tau[i] = sigma[t[i]];
      s += std::log(weight(a)(tau));
    }
    return s;
  }
};

struct GenConfig {
  long n = 0;
  double d = 1.0;
  bool poisson_m = true;
  long m_fixed = 0;
  bool enforce_band = false;  // |m - dn/k| <= n^{3/5}
};

namespace detail {

// finite-support families share atom storage; parametric draws are private
struct WeightSampler {
  const ModelSpec& P;
  FactorGraph& g;
  std::vector<std::uint32_t> atom_idx;

  WeightSampler(const ModelSpec& P_, FactorGraph& g_) : P(P_), g(g_) {
    if (P.support_kind == SupportKind::Finite)
      for (const auto& [p, w] : P.atoms) atom_idx.push_back(g.add_weight(w));
  }

  // returns the weight index; for parametric families this registers a copy
  std::uint32_t sample(Rng& rng) {
    if (P.support_kind == SupportKind::Finite) {
      double x = rng.unif();
      for (std::size_t i = 0; i < P.atoms.size(); ++i) {
        x -= P.atoms[i].first;
        if (x < 0.0) return atom_idx[i];
      }
      return atom_idx.back();
    }
    return g.add_weight(P.sample_weight(rng));
  }
};

}  // namespace detail

inline long draw_constraint_count(const GenConfig& cfg, int k, Rng& rng) {
  if (!cfg.poisson_m) {
    if (cfg.enforce_band &&
        std::abs(static_cast<double>(cfg.m_fixed) - cfg.d * cfg.n / k) >
            std::pow(static_cast<double>(cfg.n), 0.6))
      throw std::invalid_argument("fixed m outside the admissible band");
    return cfg.m_fixed;
  }
  return rng.poisson(cfg.d * static_cast<double>(cfg.n) / k);
}

// null model: uniform independent neighborhoods, i.i.d. weights
inline FactorGraph gen_null(const GenConfig& cfg, const ModelSpec& P, Rng& rng) {
  if (cfg.n < 1) throw std::invalid_argument("n >= 1 required");
  FactorGraph g;
  g.n = cfg.n;
  g.k = P.k;
  g.q = P.q();
  detail::WeightSampler ws(P, g);
  const long m = draw_constraint_count(cfg, P.k, rng);
  g.neighbors.reserve(static_cast<std::size_t>(m) * P.k);
  std::vector<std::uint32_t> tuple(P.k);
  for (long a = 0; a < m; ++a) {
    for (int i = 0; i < P.k; ++i)
      tuple[i] = static_cast<std::uint32_t>(rng.unif_int(static_cast<std::uint64_t>(cfg.n)));
    g.add_constraint(tuple, ws.sample(rng));
  }
  return g;
}

struct TeacherStats {
  long proposals = 0;
  long accepted = 0;
  double acceptance_rate() const {
    return proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
  }
};

// teacher-student model: each constraint from the density proportional to
// P(d psi) psi(sigma(y_1),...,sigma(y_k)); rejection with envelope 2
inline FactorGraph gen_teacher(long n, long m, const ModelSpec& P, const Assignment& sigma,
                               Rng& rng, TeacherStats* stats = nullptr) {
  if (static_cast<long>(sigma.size()) != n) throw std::invalid_argument("sigma length != n");
  FactorGraph g;
  g.n = n;
  g.k = P.k;
  g.q = P.q();
  detail::WeightSampler ws(P, g);
  std::vector<std::uint32_t> tuple(P.k);
  std::vector<int> tau(P.k);
  for (long a = 0; a < m; ++a) {
    for (;;) {
      const std::uint32_t widx = ws.sample(rng);
      for (int i = 0; i < P.k; ++i) {
        tuple[i] = static_cast<std::uint32_t>(rng.unif_int(static_cast<std::uint64_t>(n)));
        tau[i] = sigma[tuple[i]];
      }
      if (stats) ++stats->proposals;
      const bool accept = rng.unif() < g.weights[widx](tau) / 2.0;
      if (P.support_kind != SupportKind::Finite && !accept) {
        g.weights.pop_back();  // discard the rejected parametric draw
        continue;
      }
      if (accept) {
        if (stats) ++stats->accepted;
        g.add_constraint(tuple, widx);
        break;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// planted assignment: P[sigma] proportional to phi(rho_sigma)^m, which only
// depends on the empirical profile

namespace detail {

inline double log_profile_weight(const ModelSpec& P, long n, long m,
                                 const std::vector<long>& counts) {
  double lw = std::lgamma(static_cast<double>(n) + 1.0);
  std::vector<double> rho(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    lw -= std::lgamma(static_cast<double>(counts[i]) + 1.0);
    rho[i] = static_cast<double>(counts[i]) / n;
  }
  return lw + m * std::log(phi_rho(P, rho));
}

// number of integer profiles, saturating
inline double profile_count(long n, int q) {
  double c = 1.0;
  for (int i = 1; i < q; ++i) c *= static_cast<double>(n + i) / i;
  return c;
}

template <class F>
void for_each_profile(long n, int q, std::vector<long>& counts, int pos, F&& fn) {
  if (pos == q - 1) {
    long used = 0;
    for (int i = 0; i < q - 1; ++i) used += counts[i];
    counts[q - 1] = n - used;
    fn(counts);
    return;
  }
  long used = 0;
  for (int i = 0; i < pos; ++i) used += counts[i];
  for (long c = 0; c <= n - used; ++c) {
    counts[pos] = c;
    for_each_profile(n, q, counts, pos + 1, fn);
  }
}

}  // namespace detail

inline std::vector<long> sample_planted_profile(long n, long m, const ModelSpec& P, Rng& rng) {
  const int q = P.q();
  std::vector<long> counts(q, 0);
  if (detail::profile_count(n, q) <= 1e7) {
    // two enumeration passes in log space: total mass, then CDF inversion
    double max_lw = -1e300;
    detail::for_each_profile(n, q, counts, 0, [&](const std::vector<long>& c) {
      max_lw = std::max(max_lw, detail::log_profile_weight(P, n, m, c));
    });
    double total = 0.0;
    detail::for_each_profile(n, q, counts, 0, [&](const std::vector<long>& c) {
      total += std::exp(detail::log_profile_weight(P, n, m, c) - max_lw);
    });
    const double target = rng.unif() * total;
    double acc = 0.0;
    std::vector<long> chosen(q, 0);
    bool done = false;
    detail::for_each_profile(n, q, counts, 0, [&](const std::vector<long>& c) {
      if (done) return;
      acc += std::exp(detail::log_profile_weight(P, n, m, c) - max_lw);
      if (acc >= target) {
        chosen = c;
        done = true;
      }
    });
    if (!done) {  // numeric slack: fall back to the last profile
      detail::for_each_profile(n, q, counts, 0,
                               [&](const std::vector<long>& c) { chosen = c; });
    }
    return chosen;
  }
  // Metropolis walk over profiles, started from balanced
  for (int i = 0; i < q; ++i) counts[i] = n / q + (i < n % q ? 1 : 0);
  double lw = detail::log_profile_weight(P, n, m, counts);
  const long burn = 10000L * q;
  for (long step = 0; step < burn; ++step) {
    const int a = static_cast<int>(rng.unif_int(q));
    const int b = static_cast<int>(rng.unif_int(q));
    if (a == b || counts[a] == 0) continue;
    --counts[a];
    ++counts[b];
    const double lw2 = detail::log_profile_weight(P, n, m, counts);
    if (lw2 >= lw || rng.unif() < std::exp(lw2 - lw)) {
      lw = lw2;
    } else {
      ++counts[a];
      --counts[b];
    }
  }
  return counts;
}

inline Assignment sample_planted_assignment(long n, long m, const ModelSpec& P, Rng& rng) {
  const auto counts = sample_planted_profile(n, m, P, rng);
  Assignment sigma;
  sigma.reserve(n);
  for (int s = 0; s < P.q(); ++s) sigma.insert(sigma.end(), counts[s], s);
  for (long i = n - 1; i > 0; --i)  // Fisher-Yates
    std::swap(sigma[i], sigma[rng.unif_int(static_cast<std::uint64_t>(i + 1))]);
  return sigma;
}

// Nishimori model: (G^*(n,m,P,sigma_hat), sigma_hat), identical in law to
// the Z-reweighted graph with a Gibbs sample attached
inline std::pair<FactorGraph, Assignment> gen_nishimori(long n, long m, const ModelSpec& P,
                                                        Rng& rng,
                                                        TeacherStats* stats = nullptr) {
  Assignment sigma = sample_planted_assignment(n, m, P, rng);
  FactorGraph g = gen_teacher(n, m, P, sigma, rng, stats);
  return {std::move(g), std::move(sigma)};
}

// simplicity event: distinct neighbors per constraint, no repeated
// neighbor sets across constraints
inline bool is_simple(const FactorGraph& g) {
  std::unordered_set<std::string> seen;
  std::vector<std::uint32_t> sorted(g.k);
  for (long a = 0; a < g.m(); ++a) {
    const std::uint32_t* t = g.nb(a);
    for (int i = 0; i < g.k; ++i) sorted[i] = t[i];
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i + 1 < g.k; ++i)
      if (sorted[i] == sorted[i + 1]) return false;
    std::string key(reinterpret_cast<const char*>(sorted.data()),
                    sorted.size() * sizeof(std::uint32_t));
    if (!seen.insert(std::move(key)).second) return false;
  }
  return true;
}

// same topology over Omega x Omega with weights psi (x) psi; Z doubles in
// the exponent: Z(G (x)) = Z(G)^2
inline FactorGraph tensor_square(const FactorGraph& g) {
  FactorGraph out;
  out.n = g.n;
  out.k = g.k;
  out.q = g.q * g.q;
  out.neighbors = g.neighbors;
  out.weight_index = g.weight_index;
  const int q = g.q, Q = out.q, k = g.k;
  for (const auto& w : g.weights) {
    WeightFunction t;
    t.q = Q;
    t.k = k;
    t.family = WeightFamily::Table;
    t.table.resize(t.table_size());
    std::vector<int> u(k);
    for (std::size_t idx = 0; idx < t.table.size(); ++idx) {
      std::size_t rest = idx, si = 0, ti = 0, stride = 1;
      for (int i = 0; i < k; ++i) {
        const int ui = static_cast<int>(rest % Q);
        rest /= Q;
        si += static_cast<std::size_t>(ui % q) * stride;
        ti += static_cast<std::size_t>(ui / q) * stride;
        stride *= static_cast<std::size_t>(q);
      }
      t.table[idx] = w.table[si] * w.table[ti];
    }
    out.weights.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// line-oriented text serialization; table weights round-trip exactly

inline void write_factor_graph(std::ostream& os, const FactorGraph& g) {
  os << g.n << ' ' << g.k << ' ' << g.q << '\n';
  char buf[64];
  for (long a = 0; a < g.m(); ++a) {
    const std::uint32_t* t = g.nb(a);
    for (int i = 0; i < g.k; ++i) os << t[i] << ' ';
    const WeightFunction& w = g.weight(a);
    if (w.family == WeightFamily::Potts) {
      std::snprintf(buf, sizeof buf, "%.17g", w.params[0]);
      os << "potts " << buf;
    } else if (w.family == WeightFamily::KSpin) {
      os << "kspin";
      for (double p : w.params) {
        std::snprintf(buf, sizeof buf, " %.17g", p);
        os << buf;
      }
    } else {
      bool first = true;
      for (double v : w.table) {
        std::snprintf(buf, sizeof buf, first ? "%.17g" : " %.17g", v);
        os << buf;
        first = false;
      }
    }
    os << '\n';
  }
}

inline FactorGraph read_factor_graph(std::istream& is) {
  FactorGraph g;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty factor graph stream");
  {
    std::istringstream hs(line);
    if (!(hs >> g.n >> g.k >> g.q)) throw std::runtime_error("bad factor graph header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::uint32_t> tuple(g.k);
    for (int i = 0; i < g.k; ++i)
      if (!(ls >> tuple[i])) throw std::runtime_error("bad neighbor tuple");
    std::string tok;
    if (!(ls >> tok)) throw std::runtime_error("missing weight data");
    WeightFunction w;
    if (tok == "potts") {
      double beta;
      ls >> beta;
      w = make_potts_weight(g.q, beta);
    } else if (tok == "kspin") {
      double J, beta;
      ls >> J >> beta;
      w = make_kspin_weight(g.k, J, beta);
    } else {
      std::vector<double> table;
      table.push_back(std::stod(tok));
      double v;
      while (ls >> v) table.push_back(v);
      w.q = g.q;
      w.k = g.k;
      w.family = WeightFamily::Table;
      w.table = std::move(table);
      if (w.table.size() != w.table_size()) throw std::runtime_error("bad table length");
    }
    g.add_constraint(tuple, g.add_weight(std::move(w)));
  }
  return g;
}

}  // namespace factorphase
