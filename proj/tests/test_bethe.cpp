#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "factorphase/bethe.hpp"
#include "factorphase/operators.hpp"

using namespace factorphase;

namespace {
const double kLn2 = std::log(2.0);

Population random_population(int q, long n, Rng& rng) {
  Population pi;
  pi.q = q;
  for (long i = 0; i < n; ++i) {
    std::vector<double> pt(q);
    double s = 0.0;
    for (int c = 0; c < q; ++c) {
      pt[c] = -std::log(1.0 - rng.unif());
      s += pt[c];
    }
    for (double& x : pt) x /= s;
    pi.points.push_back(std::move(pt));
  }
  pi.recenter(1e-12);  // hard recentering keeps it inside P^2_*
  return pi;
}
}  // namespace

TEST_CASE("bethe estimator at the uniform atom hits ln q + (d/k) ln xi") {
  Rng rng(61);
  for (auto P : {ModelSpec::potts(2, kLn2), ModelSpec::potts(3, 1.0),
                 ModelSpec::gaussian_kspin(3, 1.0), ModelSpec::xorsat(3, 1.0)}) {
    for (double d : {0.5, 1.0, 2.0}) {
      const auto pi = Population::uniform_atom(P.q(), 100);
      const auto est = bethe_estimate(d, P, pi, 50000, rng);
      INFO("family " << static_cast<int>(P.family) << " d=" << d);
      REQUIRE(std::abs(est.value - est.threshold) < 3 * est.se + 1e-9);
    }
  }
}

TEST_CASE("bethe at d=0 is ln q exactly") {
  Rng rng(62);
  auto P = ModelSpec::potts(3, 0.7);
  const auto est = bethe_estimate(0.0, P, Population::uniform_atom(3, 10), 1000, rng);
  REQUIRE(est.value == Catch::Approx(std::log(3.0)).margin(1e-12));
  REQUIRE(est.se < 1e-12);
}

TEST_CASE("exact atom evaluation") {
  Rng rng(63);

  SECTION("uniform atom reproduces the threshold") {
    for (auto P : {ModelSpec::potts(2, kLn2), ModelSpec::potts(3, kLn2),
                   ModelSpec::xorsat(2, 1.0)}) {
      for (double d : {0.5, 1.0}) {
        const double b = bethe_exact_atoms(
            d, P, {{1.0, std::vector<double>(P.q(), 1.0 / P.q())}});
        REQUIRE(b == Catch::Approx(bethe_threshold(P, d)).margin(1e-10));
      }
    }
  }

  SECTION("agrees with Monte-Carlo on polarized atoms") {
    auto P = ModelSpec::potts(2, 1.3);
    std::vector<std::pair<double, std::vector<double>>> atoms{
        {0.5, {0.8, 0.2}}, {0.5, {0.2, 0.8}}};
    const double b = bethe_exact_atoms(1.2, P, atoms);
    Population pi;
    pi.q = 2;
    pi.points = {{0.8, 0.2}, {0.2, 0.8}};
    const auto est = bethe_estimate(1.2, P, pi, 400000, rng);
    REQUIRE(std::abs(b - est.value) < 3 * est.se);

    auto X = ModelSpec::xorsat(3, 0.9);
    std::vector<std::pair<double, std::vector<double>>> atoms3{
        {0.5, {0.7, 0.3}}, {0.5, {0.3, 0.7}}};
    const double b3 = bethe_exact_atoms(0.8, X, atoms3, {20, 4e7});
    Population pi3;
    pi3.q = 2;
    pi3.points = {{0.7, 0.3}, {0.3, 0.7}};
    const auto est3 = bethe_estimate(0.8, X, pi3, 400000, rng);
    REQUIRE(std::abs(b3 - est3.value) < 3 * est3.se);
  }
}

TEST_CASE("specialized closed forms track the generic estimator") {
  Rng rng(64);
  for (auto P : {ModelSpec::potts(3, kLn2), ModelSpec::gaussian_kspin(3, 1.0),
                 ModelSpec::xorsat(3, 1.0)}) {
    const auto pi = random_population(P.q(), 50, rng);
    const double d = 1.1;
    const auto generic = bethe_estimate(d, P, pi, 200000, rng);
    const auto special = bethe_closed_forms(P, d, pi, 200000, rng);
    const double se = std::sqrt(generic.se * generic.se + special.se * special.se);
    INFO("family " << static_cast<int>(P.family));
    REQUIRE(std::abs(generic.value - special.value) < 3 * se);
  }

  // k-spin at beta = 0: everything collapses to ln 2
  Rng rng2(65);
  auto P0 = ModelSpec::gaussian_kspin(3, 0.0);
  const auto est = bethe_closed_forms(P0, 1.0, random_population(2, 20, rng2), 2000, rng2);
  REQUIRE(est.value == Catch::Approx(kLn2).margin(1e-12));
}

TEST_CASE("taylor expansion of B around the uniform atom") {
  Rng rng(66);
  auto P = ModelSpec::potts(3, kLn2);
  const auto fam = sigma_perturbation(xi_operator(P));
  const double d = 1.0;

  // eps -> 0: observed difference converges to the predicted eps^4 term
  const auto rows = taylor_expansion_check(d, P, fam, {0.0125, 0.025, 0.05}, rng);
  for (const auto& r : rows) {
    INFO("eps = " << r.eps);
    REQUIRE(r.observed < 0.0);  // coefficient negative below the KS degree
    REQUIRE(r.ratio == Catch::Approx(1.0).epsilon(0.35));
  }
  // fourth-order scaling between eps and 2*eps
  const double scale = rows[1].observed / rows[0].observed;
  REQUIRE(scale > 12.0);
  REQUIRE(scale < 20.0);

  // tighter at smaller eps
  const auto fine = taylor_expansion_check(d, P, fam, {0.004, 0.008}, rng);
  REQUIRE(fine[1].observed / fine[0].observed == Catch::Approx(16.0).epsilon(0.05));
  REQUIRE(fine[0].ratio == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("population dynamics fixed point at the uniform atom") {
  Rng rng(67);
  auto P = ModelSpec::potts(2, kLn2);
  auto pi = Population::uniform_atom(2, 500);
  pi = population_step(pi, 1.5, P, rng);
  for (const auto& pt : pi.points)
    for (double x : pt) REQUIRE(x == Catch::Approx(0.5).margin(1e-12));

  // constant weights collapse any start to uniform in one step
  auto flat = ModelSpec::finite_table(2, 2,
                                      {{1.0, make_table_weight(2, 2, std::vector<double>(4, 1.0))}});
  auto pol = Population::polarized(2, 500);
  pol = population_step(pol, 1.5, flat, rng);
  REQUIRE(pol.mean_point_tv_from_uniform() < 1e-12);
}

TEST_CASE("population dynamics brackets the Ising KS degree at beta=3") {
  // d_KS = ((1+e^-3)/(1-e^-3))^2 ~ 1.2206
  Rng rng(68);
  auto P = ModelSpec::potts(2, 3.0);

  auto run = [&](double d) {
    auto pi = Population::polarized(2, 2000);
    for (int sweep = 0; sweep < 60; ++sweep) pi = population_step(pi, d, P, rng);
    return pi.mean_point_tv_from_uniform();
  };
  REQUIRE(run(0.5) < 0.03);   // collapses below the threshold
  REQUIRE(run(2.0) > 0.15);   // stays polarized above
}

TEST_CASE("dcond scan gap changes sign across the Ising threshold") {
  Rng rng(69);
  auto P = ModelSpec::potts(2, 3.0);
  PopulationConfig cfg;
  cfg.n_points = 2000;
  cfg.sweeps = 60;
  cfg.avg_last = 20;
  cfg.n_mc = 20000;
  const auto scan = dcond_scan(P, {0.5, 2.0}, cfg, rng);
  REQUIRE(scan.points.size() == 2);
  REQUIRE(scan.points[0].gap <= 3 * scan.points[0].se);
  REQUIRE(scan.points[1].gap > 3 * scan.points[1].se);
  REQUIRE(scan.bracket_lo == Catch::Approx(0.5));
  REQUIRE(scan.bracket_hi == Catch::Approx(2.0));

  // Potts bracket sits below the KS bound (Thm: d_cond <= d_KS)
  const double dks = std::pow((1 + std::exp(-3.0)) / (1 - std::exp(-3.0)), 2);
  REQUIRE(scan.bracket_lo < dks);
}
