#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "factorphase/gibbs.hpp"

using namespace factorphase;

namespace {
const double kLn2 = std::log(2.0);

// random factor tree: every new constraint hooks one existing variable and
// brings k-1 fresh ones
FactorGraph random_factor_tree(const ModelSpec& P, long n_cons, Rng& rng) {
  FactorGraph g;
  g.k = P.k;
  g.q = P.q();
  g.n = 1;
  detail::Component dummy;
  (void)dummy;
  for (long a = 0; a < n_cons; ++a) {
    std::vector<std::uint32_t> tuple(P.k);
    const int attach_pos = static_cast<int>(rng.unif_int(P.k));
    const long existing = g.n;
    for (int i = 0; i < P.k; ++i) {
      if (i == attach_pos) {
        tuple[i] = static_cast<std::uint32_t>(rng.unif_int(existing));
      } else {
        tuple[i] = static_cast<std::uint32_t>(g.n);
        ++g.n;
      }
    }
    g.add_constraint(tuple, g.add_weight(P.sample_weight(rng)));
  }
  return g;
}

double per_function_log_xi(const WeightFunction& w) {
  // q^{1-k} * (any SYM row sum); SYM models make this position-independent
  double s = 0.0;
  for (std::size_t idx = 0; idx < w.table.size(); ++idx)
    if (idx % w.q == 0) s += w.table[idx];  // tau_1 = 0
  return std::log(s) + (1 - w.k) * std::log(static_cast<double>(w.q));
}
}  // namespace

TEST_CASE("partition of a single Potts edge") {
  FactorGraph g;
  g.n = 2;
  g.k = 2;
  g.q = 2;
  g.add_constraint({0, 1}, g.add_weight(make_potts_weight(2, kLn2)));
  REQUIRE(std::exp(partition_exact(g, PartitionMode::Enumerate).log_z) ==
          Catch::Approx(3.0).margin(1e-12));
  REQUIRE(std::exp(partition_exact(g, PartitionMode::Components).log_z) ==
          Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("tree free-energy identity: log Z = n log q + sum_a log xi_a") {
  Rng rng(31);
  for (auto P : {ModelSpec::potts(2, kLn2), ModelSpec::potts(3, 1.0),
                 ModelSpec::gaussian_kspin(3, 1.0), ModelSpec::xorsat(2, 1.0)}) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto g = random_factor_tree(P, 1 + static_cast<long>(rng.unif_int(10)), rng);
      double expect = g.n * std::log(static_cast<double>(g.q));
      for (long a = 0; a < g.m(); ++a) expect += per_function_log_xi(g.weight(a));
      const double lz = partition_exact(g, PartitionMode::Components).log_z;
      REQUIRE(lz == Catch::Approx(expect).margin(1e-9));
    }
  }
}

TEST_CASE("enumerate and components modes agree on random graphs") {
  Rng rng(32);
  GenConfig cfg;
  cfg.n = 14;
  cfg.d = 0.8;
  for (int trial = 0; trial < 100; ++trial) {
    auto P = trial % 3 == 0 ? ModelSpec::potts(2, kLn2)
             : trial % 3 == 1 ? ModelSpec::gaussian_kspin(2, 1.0)
                              : ModelSpec::xorsat(3, 1.0);
    const auto g = gen_null(cfg, P, rng);
    const double a = partition_exact(g, PartitionMode::Enumerate).log_z;
    const double b = partition_exact(g, PartitionMode::Components).log_z;
    REQUIRE(a == Catch::Approx(b).margin(1e-9));
  }
}

TEST_CASE("components mode handles dense little cores") {
  // triangle plus a double edge and a self-loop
  Rng rng(33);
  FactorGraph g;
  g.n = 5;
  g.k = 2;
  g.q = 3;
  const auto w = g.add_weight(make_potts_weight(3, 0.9));
  g.add_constraint({0, 1}, w);
  g.add_constraint({1, 2}, w);
  g.add_constraint({2, 0}, w);
  g.add_constraint({3, 4}, w);
  g.add_constraint({4, 3}, w);
  g.add_constraint({3, 3}, w);
  const double a = partition_exact(g, PartitionMode::Enumerate).log_z;
  const double b = partition_exact(g, PartitionMode::Components).log_z;
  REQUIRE(a == Catch::Approx(b).margin(1e-10));
}

TEST_CASE("marginals from the component solver match enumeration") {
  Rng rng(34);
  GenConfig cfg;
  cfg.n = 8;
  cfg.d = 1.2;
  auto P = ModelSpec::potts(3, 1.1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = gen_null(cfg, P, rng);
    const auto exact = partition_exact(g, PartitionMode::Enumerate, true);
    const auto comp = partition_exact(g, PartitionMode::Components, true);
    for (long v = 0; v < g.n; ++v)
      for (int s = 0; s < g.q; ++s)
        REQUIRE(comp.marginals[v][s] == Catch::Approx(exact.marginals[v][s]).margin(1e-10));
  }
}

TEST_CASE("exact sampler matches the full Gibbs table") {
  Rng rng(35);
  GenConfig cfg;
  cfg.n = 6;
  cfg.d = 1.3;
  auto P = ModelSpec::potts(2, kLn2);
  const auto g = gen_null(cfg, P, rng);
  const auto exact = partition_exact(g, PartitionMode::Enumerate, false, true);
  const long trials = 40000;
  std::vector<double> counts(exact.full_table.size(), 0.0);
  const auto samples = gibbs_sample(g, trials, SampleMethod::Exact, 0, rng);
  for (const auto& sigma : samples) {
    std::size_t idx = 0, stride = 1;
    for (long v = 0; v < g.n; ++v) {
      idx += static_cast<std::size_t>(sigma[v]) * stride;
      stride *= static_cast<std::size_t>(g.q);
    }
    counts[idx] += 1.0;
  }
  double chi = 0.0;
  int df = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expect = trials * exact.full_table[i];
    if (expect < 5) continue;  // merge-free pragmatic cutoff for the test
    chi += (counts[i] - expect) * (counts[i] - expect) / expect;
    ++df;
  }
  REQUIRE(chi_square_sf(chi, df - 1) > 1e-4);
}

TEST_CASE("strong single edge correlates the pair") {
  // P(sigma_1 = sigma_2) = e^{-beta} / (e^{-beta} + 1) at q = 2
  const double beta = 5.0;
  FactorGraph g;
  g.n = 2;
  g.k = 2;
  g.q = 2;
  g.add_constraint({0, 1}, g.add_weight(make_potts_weight(2, beta)));
  Rng rng(36);
  const auto samples = gibbs_sample(g, 20000, SampleMethod::Exact, 0, rng);
  long eq = 0;
  for (const auto& s : samples) eq += s[0] == s[1];
  const double expect = std::exp(-beta) / (std::exp(-beta) + 1.0);
  const double se = std::sqrt(expect * (1 - expect) / 20000);
  REQUIRE(std::abs(eq / 20000.0 - expect) < 4 * se + 1e-3);
}

TEST_CASE("glauber chain on the empty graph is uniform") {
  FactorGraph g;
  g.n = 5;
  g.k = 2;
  g.q = 3;
  Rng rng(37);
  const auto samples = gibbs_sample(g, 3000, SampleMethod::Glauber, 2, rng);
  std::vector<long> counts(3, 0);
  for (const auto& s : samples)
    for (int v : s) ++counts[v];
  const double total = 3000.0 * 5;
  double chi = 0.0;
  for (long c : counts) chi += (c - total / 3) * (c - total / 3) / (total / 3);
  REQUIRE(chi_square_sf(chi, 2) > 1e-4);
}

TEST_CASE("overlap counting") {
  Assignment s{0, 0, 1, 1}, t{0, 1, 0, 1};
  const auto om = overlap_pair(s, t, 2);
  for (double v : om.table) REQUIRE(v == Catch::Approx(0.25).margin(1e-15));

  const auto diag = overlap_pair(s, s, 2);
  REQUIRE(diag.table[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(diag.table[3] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(diag.table[1] == Catch::Approx(0.0).margin(1e-15));

  // l = 1 is the empirical profile
  const auto prof = overlap({&s}, 2);
  REQUIRE(prof.table[0] == Catch::Approx(0.5).margin(1e-15));

  // diagonal overlap of a balanced assignment: TV from uniform is 1 - 1/q
  std::vector<double> unif(4, 0.25);
  REQUIRE(tv_distance(diag.table, unif) == Catch::Approx(0.5).margin(1e-12));

  Assignment bad{0, 1};
  REQUIRE_THROWS(overlap_pair(s, bad, 2));
}

TEST_CASE("overlap concentration in the subcritical phase") {
  Rng rng(38);

  // empty graph: independent uniform spins, TV of order n^{-1/2}
  FactorGraph empty;
  empty.n = 10000;
  empty.k = 2;
  empty.q = 2;
  auto oc = overlap_concentration(empty, 20, rng);
  REQUIRE(oc.mean_tv < 0.03);

  // d = 0.5 Potts: forests plus few unicyclic components
  GenConfig cfg;
  cfg.n = 10000;
  cfg.d = 0.5;
  const auto g = gen_null(cfg, ModelSpec::potts(2, kLn2), rng);
  oc = overlap_concentration(g, 20, rng);
  REQUIRE(oc.mean_tv < 0.05);
  REQUIRE(oc.zeta == Catch::Approx(std::pow(10000.0, -1.0 / 7.0)).margin(1e-12));
  REQUIRE(oc.truncation_indicator);
}

TEST_CASE("pair marginal gap") {
  Rng rng(39);

  FactorGraph empty;
  empty.n = 30;
  empty.k = 2;
  empty.q = 2;
  REQUIRE(pair_marginal_gap(empty, 40, rng).value == Catch::Approx(0.0).margin(1e-12));

  // two variables joined by one Potts edge: TV = |e^-b - 1| / (2(1+e^-b))
  const double beta = kLn2;
  FactorGraph g;
  g.n = 2;
  g.k = 2;
  g.q = 2;
  g.add_constraint({0, 1}, g.add_weight(make_potts_weight(2, beta)));
  const double expect = std::abs(std::exp(-beta) - 1.0) / (2.0 * (1.0 + std::exp(-beta)));
  REQUIRE(pair_marginal_gap(g, 10, rng).value == Catch::Approx(expect).margin(1e-10));
}

TEST_CASE("point-to-set correlation") {
  Rng rng(40);
  const double beta = kLn2;

  // radius smaller than 2*ell: empty boundary, uniform posterior
  FactorGraph g;
  g.n = 2;
  g.k = 2;
  g.q = 2;
  g.add_constraint({0, 1}, g.add_weight(make_potts_weight(2, beta)));
  REQUIRE(corr_point_to_set(g, 0, 2, 5, rng).value == Catch::Approx(0.0).margin(1e-12));

  // path of two Potts edges, ell = 1: compare with enumeration
  FactorGraph path;
  path.n = 3;
  path.k = 2;
  path.q = 2;
  const auto w = path.add_weight(make_potts_weight(2, beta));
  path.add_constraint({0, 1}, w);
  path.add_constraint({1, 2}, w);
  // enumeration oracle: E_boundary sum_s |P(y=s | boundary) - 1/2| at y=1
  const auto full = partition_exact(path, PartitionMode::Enumerate, false, true);
  double oracle = 0.0;
  for (int b0 = 0; b0 < 2; ++b0)
    for (int b2 = 0; b2 < 2; ++b2) {
      double pb = 0.0, py[2] = {0, 0};
      for (int y = 0; y < 2; ++y) {
        const std::size_t idx = b0 + 2 * y + 4 * b2;
        pb += full.full_table[idx];
        py[y] += full.full_table[idx];
      }
      oracle += pb * (std::abs(py[0] / pb - 0.5) + std::abs(py[1] / pb - 0.5));
    }
  const auto est = corr_point_to_set(path, 1, 1, 4000, rng);
  REQUIRE(std::abs(est.value - oracle) < 4 * est.se + 1e-3);

  // weak coupling limit: correlation fades
  FactorGraph weak;
  weak.n = 3;
  weak.k = 2;
  weak.q = 2;
  const auto w2 = weak.add_weight(make_potts_weight(2, 1e-6));
  weak.add_constraint({0, 1}, w2);
  weak.add_constraint({1, 2}, w2);
  REQUIRE(corr_point_to_set(weak, 1, 1, 50, rng).value < 1e-5);
}
