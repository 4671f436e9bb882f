#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "factorphase/fluct.hpp"

using namespace factorphase;

namespace {
const double kLn2 = std::log(2.0);

FactorGraph triangle(int q, double beta) {
  FactorGraph g;
  g.n = 3;
  g.k = 2;
  g.q = q;
  const auto w = g.add_weight(make_potts_weight(q, beta));
  g.add_constraint({0, 1}, w);
  g.add_constraint({1, 2}, w);
  g.add_constraint({2, 0}, w);
  return g;
}
}  // namespace

TEST_CASE("cycle counting on hand-built graphs") {
  const auto tri = triangle(2, 1.0);
  auto census = count_cycles(tri, 4, {});
  REQUIRE(census.order_totals[1] == 0);
  REQUIRE(census.order_totals[2] == 0);
  REQUIRE(census.order_totals[3] == 1);

  // single self-loop: one order-1 cycle
  FactorGraph loop;
  loop.n = 2;
  loop.k = 2;
  loop.q = 2;
  const auto w = loop.add_weight(make_potts_weight(2, 1.0));
  loop.add_constraint({0, 0}, w);
  census = count_cycles(loop, 3, {Signature::all_of_order(1, {0}, {1})});
  REQUIRE(census.order_totals[1] == 1);
  REQUIRE(census.signature_counts[0] == 1);

  // double edge: one order-2 cycle
  FactorGraph dbl;
  dbl.n = 2;
  dbl.k = 2;
  dbl.q = 2;
  const auto w2 = dbl.add_weight(make_potts_weight(2, 1.0));
  dbl.add_constraint({0, 1}, w2);
  dbl.add_constraint({1, 0}, w2);
  census = count_cycles(dbl, 3, {});
  REQUIRE(census.order_totals[2] == 1);
  REQUIRE(census.order_totals[1] == 0);

  // forest: nothing
  FactorGraph path;
  path.n = 3;
  path.k = 2;
  path.q = 2;
  const auto w3 = path.add_weight(make_potts_weight(2, 1.0));
  path.add_constraint({0, 1}, w3);
  path.add_constraint({1, 2}, w3);
  census = count_cycles(path, 4, {});
  for (int l = 1; l <= 4; ++l) REQUIRE(census.order_totals[l] == 0);

  REQUIRE_THROWS(count_cycles(path, 9, {}));
}

TEST_CASE("disjoint signature counts add up to the per-pattern totals") {
  // XORSAT k=2: split all order-2 (0,1)(0,1) cycles by the sign of the first
  // weight; the two disjoint signature counts must sum to the pattern count
  Rng rng(71);
  auto P = ModelSpec::xorsat(2, 1.0);
  GenConfig cfg;
  cfg.n = 120;
  cfg.d = 1.6;
  Signature plus, minus, any;
  for (Signature* y : {&plus, &minus, &any}) {
    y->s = {0, 0};
    y->t = {1, 1};
  }
  plus.events = {SignatureEvent::of_atom(0), SignatureEvent::all()};
  minus.events = {SignatureEvent::of_atom(1), SignatureEvent::all()};
  any.events = {SignatureEvent::all(), SignatureEvent::all()};
  long total_split = 0, total_any = 0;
  for (int i = 0; i < 300; ++i) {
    const auto g = gen_null(cfg, P, rng);
    const auto census = count_cycles(g, 2, {plus, minus, any}, &P);
    total_split += census.signature_counts[0] + census.signature_counts[1];
    total_any += census.signature_counts[2];
  }
  REQUIRE(total_any > 30);
  REQUIRE(total_split == total_any);
}

TEST_CASE("signature constants") {
  SECTION("Potts all-Psi signatures have the closed-form delta") {
    for (auto [q, beta] : {std::pair{2, kLn2}, {3, 1.0}}) {
      auto P = ModelSpec::potts(q, beta);
      const double lam = (std::exp(-beta) - 1) / (q - 1 + std::exp(-beta));
      for (int l : {1, 2, 3, 4}) {
        std::vector<int> s(l, 0), t(l, 1);
        const auto sc = signature_constants(Signature::all_of_order(l, s, t), 1.0, P);
        REQUIRE(sc.delta ==
                Catch::Approx((q - 1) * std::pow(lam, l)).margin(1e-12));
        // single atom: kappa_hat / kappa = Tr(Phi_Y) exactly
        REQUIRE(sc.kappa_hat / sc.kappa == Catch::Approx(1.0 + sc.delta).margin(1e-12));
      }
    }
  }
  SECTION("k-spin k>=3: conditional matrices are uniform, kappa_hat = kappa") {
    auto P = ModelSpec::xorsat(3, 1.0);
    Signature y;
    y.events = {SignatureEvent::of_atom(0), SignatureEvent::of_atom(1)};
    y.s = {0, 1};
    y.t = {2, 0};
    const auto sc = signature_constants(y, 1.5, P);
    REQUIRE(trace(sc.phi_y) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(sc.kappa_hat == Catch::Approx(sc.kappa).margin(1e-15));
    // kappa = (d/k)^2 * (1/2)^2 / 4
    REQUIRE(sc.kappa == Catch::Approx(std::pow(1.5 / 3, 2) * 0.25 / 4).margin(1e-15));
  }
  SECTION("order-2 all-Psi at k=2, d=1: kappa = 1/16") {
    auto P = ModelSpec::potts(2, kLn2);
    const auto sc = signature_constants(Signature::all_of_order(2, {0, 0}, {1, 1}), 1.0, P);
    REQUIRE(sc.kappa == Catch::Approx(1.0 / 16).margin(1e-15));
  }
}

TEST_CASE("order-1 normalization resolved by the brute-force oracle") {
  // direct expected count of order-1 signatures is (d/k) P(E), not d/(2k):
  // measure it for k = 3, where the two normalizations differ by 2x
  Rng rng(72);
  auto P = ModelSpec::xorsat(3, 1.0);
  const double d = 1.5;
  GenConfig cfg;
  cfg.n = 300;
  cfg.d = d;
  Signature y01 = Signature::all_of_order(1, {0}, {1});
  RunningStat st;
  for (int i = 0; i < 4000; ++i) {
    const auto g = gen_null(cfg, P, rng);
    st.add(static_cast<double>(count_cycles(g, 1, {y01}, &P).signature_counts[0]));
  }
  const double kappa_impl = signature_constants(y01, d, P).kappa;
  REQUIRE(kappa_impl == Catch::Approx(d / 3).margin(1e-15));  // the adopted choice
  REQUIRE(std::abs(st.mean - d / 3) < 3 * st.se());           // oracle agrees
  REQUIRE(std::abs(st.mean - d / 6) > 10 * st.se());          // eqCycles' 1/(2l) ruled out

  // totals: C_1 mean matches ((k-1)d)/2 only with the adopted normalization
  double total = 0.0;
  std::vector<Signature> all1;
  for (int s = 0; s < 3; ++s)
    for (int t = s + 1; t < 3; ++t) {
      all1.push_back(Signature::all_of_order(1, {s}, {t}));
      total += signature_constants(all1.back(), d, P).kappa;
    }
  REQUIRE(total == Catch::Approx((3 - 1) * d / 2).margin(1e-12));
}

TEST_CASE("poisson fit on the null and reweighted models") {
  Rng rng(73);
  auto P = ModelSpec::potts(2, kLn2);
  const double d = 1.0;
  std::vector<Signature> sigs{Signature::all_of_order(1, {0}, {1}),
                              Signature::all_of_order(2, {0, 0}, {1, 1})};

  auto fit = poisson_fit(CensusModel::Null, d, P, sigs, 600, 1500, 3, rng, 2);
  for (const auto& row : fit.per_signature) REQUIRE(std::abs(row.z) < 3.5);
  for (const auto& row : fit.per_order) REQUIRE(std::abs(row.z) < 3.5);
  REQUIRE(fit.independence_pvalue > 1e-4);

  // Nishimori: order-1 mean inflated by Tr(Phi) = 2/3
  auto nfit = poisson_fit(CensusModel::Nishimori, d, P, sigs, 600, 1500, 3, rng, 2);
  REQUIRE(nfit.per_signature[0].predicted_mean ==
          Catch::Approx(0.5 * (2.0 / 3)).margin(1e-12));
  for (const auto& row : nfit.per_signature) REQUIRE(std::abs(row.z) < 3.5);
  for (const auto& row : nfit.per_order) REQUIRE(std::abs(row.z) < 3.5);

  // k-spin: reweighting does not move the means
  auto X = ModelSpec::xorsat(3, 1.0);
  std::vector<Signature> xs{Signature::all_of_order(1, {0}, {1})};
  auto xfit = poisson_fit(CensusModel::Nishimori, d, X, xs, 400, 800, 2, rng, 2);
  REQUIRE(xfit.per_signature[0].predicted_mean == Catch::Approx(d / 3).margin(1e-12));
  REQUIRE(std::abs(xfit.per_signature[0].z) < 3.5);
}

TEST_CASE("sample_K") {
  Rng rng(74);

  SECTION("k-spin k>=3 gives the zero distribution") {
    auto P = ModelSpec::xorsat(3, 1.0);
    for (int i = 0; i < 50; ++i)
      REQUIRE(sample_K(0.4, P, 12, false, rng).value == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("Potts mean matches the single-atom closed series") {
    auto P = ModelSpec::potts(2, kLn2);
    const double d = 1.0;
    const int ell = 20;
    KSampler ks(d, P, ell, false);
    RunningStat st;
    for (long i = 0; i < 200000; ++i) st.add(ks.sample(rng).value);
    double expect = 0.0;
    for (int l = 1; l <= ell; ++l) {
      const double t = 1.0 + (2 - 1) * std::pow(-1.0 / 3, l);
      expect += std::pow(d, l) / (2.0 * l) * ((1.0 - t) + std::log(t));
    }
    REQUIRE(std::abs(st.mean - expect) < 3 * st.se());
  }

  SECTION("tail bound controls the ell_max sensitivity") {
    auto P = ModelSpec::potts(2, kLn2);
    const double d = 1.0;
    KSampler k10(d, P, 10, false), k20(d, P, 20, false);
    Rng r1(7), r2(7);
    RunningStat m10, m20;
    for (long i = 0; i < 100000; ++i) {
      m10.add(k10.sample(r1).value);
      m20.add(k20.sample(r2).value);
    }
    REQUIRE(std::abs(m20.mean - m10.mean) <=
            k10.tail_bound() + 3 * std::sqrt(m10.se() * m10.se() + m20.se() * m20.se()));
    REQUIRE(k20.tail_bound() < k10.tail_bound());
  }

  SECTION("divergent regime refused") {
    auto P = ModelSpec::potts(2, kLn2);  // lambda_hat = 1/9, so d(k-1) < 9 required
    REQUIRE_THROWS(KSampler(9.2, P, 10, false));
    REQUIRE_NOTHROW(KSampler(8.5, P, 10, false));
  }

  SECTION("conditioning on S drops the short-cycle randomness") {
    auto P = ModelSpec::potts(2, kLn2);
    // with d(k-1) small, K' is nearly deterministic: l=1,2 Poisson parts gone
    KSampler ks(0.3, P, 2, true);
    Rng r(9);
    const double v1 = ks.sample(r).value;
    const double v2 = ks.sample(r).value;
    REQUIRE(v1 == Catch::Approx(v2).margin(1e-12));  // deterministic up to ell=2
    const double expect = 0.3 * (1 - 2.0 / 3) / 2 + 0.09 * (1 - (1 + 1.0 / 9)) / 4;
    REQUIRE(v1 == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("moment formulas") {
  Rng rng(75);

  SECTION("exact profile-sum E[Z] matches brute-force Monte-Carlo") {
    auto P = ModelSpec::potts(2, kLn2);
    const long n = 12, m = 6;
    const double exact = log_expected_z_profile_sum(P, n, m);
    RunningStat st;
    GenConfig cfg;
    cfg.n = n;
    cfg.poisson_m = false;
    cfg.m_fixed = m;
    for (long i = 0; i < 20000; ++i) {
      const auto g = gen_null(cfg, P, rng);
      st.add(std::exp(partition_exact(g, PartitionMode::Components).log_z));
    }
    REQUIRE(std::abs(st.mean - std::exp(exact)) < 3 * st.se());
  }

  SECTION("asymptotic formula converges to the exact sum") {
    auto P = ModelSpec::potts(2, kLn2);
    const long n = 400;
    const double d = 0.8;
    const long m = static_cast<long>(d * n / 2);
    const auto rep = spectra(phi_mean(P), xi_operator(P), 2);
    const auto mr = moment_formulas(n, m, d, P, rep);
    REQUIRE(std::abs(mr.log_ez_exact - mr.log_ez_asymptotic) < 0.02);
  }

  SECTION("k-spin k>=3 variance ratio is 1") {
    auto P = ModelSpec::xorsat(3, 1.0);
    const auto rep = spectra(phi_mean(P), xi_operator(P), 3);
    const auto mr = moment_formulas(100, 30, 0.9, P, rep);
    REQUIRE(mr.variance_ratio == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(mr.log_ez_exact == Catch::Approx(100 * kLn2).margin(1e-9));
  }

  SECTION("variance ratio matches the Potts closed form") {
    auto P = ModelSpec::potts(2, kLn2);
    const auto rep = spectra(phi_mean(P), xi_operator(P), 2);
    const auto mr = moment_formulas(50, 20, 0.8, P, rep);
    REQUIRE(mr.variance_ratio ==
            Catch::Approx(1.0 / std::sqrt(1.0 - 0.8 / 9)).margin(1e-10));
  }
}

TEST_CASE("fluctuation experiment at desk scale") {
  Rng rng(76);

  SECTION("k-spin k=3 degenerate case: centered values match K = 0") {
    auto P = ModelSpec::xorsat(3, 1.0);
    const auto res = fluctuation_experiment(0.4, P, 3000, 40, 200, 10, false, rng, 2);
    for (double v : res.centered) REQUIRE(std::abs(v) < 1e-7);
    for (double v : res.k_samples) REQUIRE(v == 0.0);
  }

  SECTION("Potts: centered law close to K in Kolmogorov distance") {
    auto P = ModelSpec::potts(2, kLn2);
    const auto res = fluctuation_experiment(0.8, P, 20000, 150, 20000, 20, false, rng, 2);
    REQUIRE(res.ks_distance < 0.15);
    REQUIRE(std::abs(res.centered_mean - res.k_mean) <
            3 * std::sqrt(res.centered_se * res.centered_se + res.k_se * res.k_se) + 0.05);
  }
}
