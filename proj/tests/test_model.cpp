#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "factorphase/assumptions.hpp"
#include "factorphase/model.hpp"

using namespace factorphase;

namespace {
const double kLn2 = std::log(2.0);
}

TEST_CASE("weight evaluation") {
  auto potts = ModelSpec::potts(2, kLn2);
  const auto& psi = potts.atoms[0].second;
  REQUIRE(eval_weight(psi, {0, 0}) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(eval_weight(psi, {0, 1}) == Catch::Approx(1.0).margin(1e-15));

  const auto flat = make_kspin_weight(3, 0.0, 1.0);
  REQUIRE(eval_weight(flat, {0, 1, 0}) == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(eval_weight(flat, {1, 1, 1}) == Catch::Approx(1.0).margin(1e-15));

  REQUIRE_THROWS(eval_weight(psi, {0, 2}));
}

TEST_CASE("every sampled weight lies strictly inside (0,2)") {
  Rng rng(1);
  for (auto P : {ModelSpec::potts(3, 2.0), ModelSpec::gaussian_kspin(3, 1.0),
                 ModelSpec::xorsat(3, 1.0)}) {
    for (int i = 0; i < 200; ++i) {
      const auto w = P.sample_weight(rng);
      for (double v : w.table) REQUIRE((v > 0.0 && v < 2.0));
    }
  }
}

TEST_CASE("sampling laws of the built-ins") {
  Rng rng(2);
  auto potts = ModelSpec::potts(3, 1.0);
  for (int i = 0; i < 10; ++i)
    REQUIRE(potts.sample_weight(rng).table == potts.atoms[0].second.table);

  // XORSAT signs are fair coin flips
  auto xs = ModelSpec::xorsat(3, 1.0);
  int plus = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    if (xs.sample_weight(rng).table[0] > 1.0) ++plus;
  const double se = std::sqrt(0.25 / n);
  REQUIRE(std::abs(plus / static_cast<double>(n) - 0.5) < 3 * se);

  // Gaussian couplings: mean tanh(J beta) vanishes by symmetry
  auto ks = ModelSpec::gaussian_kspin(3, 1.0);
  RunningStat st;
  for (int i = 0; i < 100000; ++i) st.add(ks.sample_weight(rng).table[0] - 1.0);
  REQUIRE(std::abs(st.mean) < 3 * st.se());
}

TEST_CASE("xi constants") {
  Rng rng(3);
  REQUIRE(ModelSpec::potts(2, kLn2).xi() == Catch::Approx(0.75).margin(1e-12));
  REQUIRE(ModelSpec::potts(3, kLn2).xi() == Catch::Approx(5.0 / 6.0).margin(1e-12));
  REQUIRE(ModelSpec::gaussian_kspin(3, 1.0).xi() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ModelSpec::xorsat(4, 0.7).xi() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(xi_constant(ModelSpec::potts(2, kLn2), 10, rng).value ==
          Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("phi_rho") {
  auto potts = ModelSpec::potts(2, kLn2);
  REQUIRE(phi_rho(potts, {0.5, 0.5}) == Catch::Approx(0.75).margin(1e-12));
  REQUIRE(phi_rho(potts, {1.0, 0.0}) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(phi_rho(ModelSpec::gaussian_kspin(3, 1.0), {0.3, 0.7}) ==
          Catch::Approx(1.0).margin(1e-12));
  REQUIRE_THROWS(phi_rho(potts, {0.5, 0.6}));
  REQUIRE_THROWS(phi_rho(potts, {0.5, 0.5, 0.0}));

  // phi(uniform) = xi for every built-in distribution
  for (auto P : {ModelSpec::potts(2, kLn2), ModelSpec::potts(3, 1.0),
                 ModelSpec::gaussian_kspin(3, 1.0), ModelSpec::xorsat(3, 1.0)}) {
    std::vector<double> unif(P.q(), 1.0 / P.q());
    REQUIRE(phi_rho(P, unif) == Catch::Approx(P.xi()).margin(1e-12));
  }

  // generic table path agrees with the closed form
  auto table_potts = ModelSpec::finite_table(2, 2, {{1.0, make_potts_weight(2, kLn2)}});
  REQUIRE(phi_rho(table_potts, {0.25, 0.75}) ==
          Catch::Approx(phi_rho(ModelSpec::potts(2, kLn2), {0.25, 0.75})).margin(1e-12));
}

TEST_CASE("discretization") {
  // XORSAT atoms never share a cube, so psi^(r) = psi
  auto xs = ModelSpec::xorsat(2, 1.0);
  for (int r : {1, 2, 5}) {
    for (const auto& [p, w] : xs.atoms) {
      const auto d = discretize_weight(xs, w, r);
      for (std::size_t i = 0; i < w.table.size(); ++i)
        REQUIRE(d.table[i] == Catch::Approx(w.table[i]).margin(1e-12));
    }
  }

  // parametric family: cube-mean stays within 1/r of the original
  auto ks = ModelSpec::gaussian_kspin(2, 1.0);
  Rng rng(5);
  for (int r : {1, 2, 4, 16, 64}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto psi = ks.sample_weight(rng);
      const auto d = discretize_weight(ks, psi, r);
      double worst = 0.0;
      for (std::size_t i = 0; i < psi.table.size(); ++i)
        worst = std::max(worst, std::abs(d.table[i] - psi.table[i]));
      REQUIRE(worst <= 1.0 / r + 1e-12);
      // idempotence
      const auto dd = discretize_weight(ks, d, r);
      for (std::size_t i = 0; i < d.table.size(); ++i)
        REQUIRE(dd.table[i] == Catch::Approx(d.table[i]).margin(1e-9));
    }
  }

  // finite support with several atoms in one cube: conditional mean
  auto w1 = make_table_weight(2, 1, {0.4, 1.6});
  auto w2 = make_table_weight(2, 1, {0.45, 1.55});
  auto w3 = make_table_weight(2, 1, {1.2, 0.8});
  auto fin = ModelSpec::finite_table(2, 1, {{0.25, w1}, {0.25, w2}, {0.5, w3}});
  const auto d1 = discretize_weight(fin, w1, 1);
  REQUIRE(d1.table[0] == Catch::Approx(0.425).margin(1e-12));
  REQUIRE(d1.table[1] == Catch::Approx(1.575).margin(1e-12));
  const auto d3 = discretize_weight(fin, w3, 1);
  REQUIRE(d3.table[0] == Catch::Approx(1.2).margin(1e-12));
  const auto dd1 = discretize_weight(fin, d1, 1);
  REQUIRE(dd1.table[0] == Catch::Approx(d1.table[0]).margin(1e-12));
}

TEST_CASE("sym identity holds exactly for built-ins") {
  Rng rng(6);
  for (auto P : {ModelSpec::potts(2, kLn2), ModelSpec::potts(3, 1.0),
                 ModelSpec::gaussian_kspin(3, 1.3), ModelSpec::xorsat(4, 0.9)}) {
    const double xi = P.xi();
    for (int i = 0; i < 50; ++i) {
      const auto w = P.sample_weight(rng);
      REQUIRE(detail::sym_violation_of(w, xi) < 1e-10);
    }
  }
}

TEST_CASE("check_assumptions on the built-ins") {
  CheckBudget budget;
  budget.sym_samples = 50;
  budget.bal_points = 25;
  budget.min_restarts = 20;
  budget.pos_samples = 4000;

  DistList unif_atom;
  SECTION("Potts") {
    for (auto [q, beta] : {std::pair{2, kLn2}, {3, kLn2}, {3, 1.0}}) {
      Rng rng(11);
      auto P = ModelSpec::potts(q, beta);
      DistList atom{std::vector<double>(q, 1.0 / q)};
      const auto rep = check_assumptions(P, atom, atom, budget, rng);
      INFO("q=" << q << " beta=" << beta);
      REQUIRE(rep.sym_ok);
      REQUIRE(rep.bal_ok);
      REQUIRE(rep.min_ok);
    }
  }
  SECTION("even k-spin has MIN, odd does not reach uniform") {
    Rng rng(12);
    auto even = ModelSpec::gaussian_kspin(2, 1.0);
    DistList atom{{0.5, 0.5}};
    auto rep = check_assumptions(even, atom, atom, budget, rng);
    REQUIRE(rep.sym_ok);
    REQUIRE(rep.bal_ok);
    REQUIRE(rep.min_ok);

    auto even4 = ModelSpec::xorsat(4, 1.0);
    rep = check_assumptions(even4, atom, atom, budget, rng);
    REQUIRE(rep.min_ok);

    auto odd = ModelSpec::xorsat(3, 1.0);
    rep = check_assumptions(odd, atom, atom, budget, rng);
    REQUIRE(rep.sym_ok);
    REQUIRE_FALSE(rep.min_ok);  // minimizer sits on the boundary for odd k
  }
  SECTION("POS estimate for k-spin with identical populations is ~0") {
    Rng rng(13);
    auto P = ModelSpec::gaussian_kspin(3, 1.0);
    DistList pts{{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}};
    const auto rep = check_assumptions(P, pts, pts, budget, rng);
    REQUIRE(rep.pos_estimate >= -3.0 * rep.pos_se);
  }
}
