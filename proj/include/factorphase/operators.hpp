#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "la.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace factorphase {

// tensor pair index for R^q (x) R^q: e_a (x) e_b  ->  a*q + b
inline int tensor_index(int a, int b, int q) { return a * q + b; }

// Phi_{psi,h,hp}(w,w') = q^{1-k} xi^{-1} sum_{tau: tau_h=w, tau_hp=w'} psi(tau)
// built from any table (a single weight function or a conditional mean);
// positions are 0-based
inline Matrix phi_of_table(const std::vector<double>& table, int q, int k, int h, int hp,
                           double xi) {
  if (h == hp) throw std::invalid_argument("positions must differ");
  if (h < 0 || hp < 0 || h >= k || hp >= k) throw std::invalid_argument("position out of range");
  Matrix m(q, q);
  std::size_t stride_h = 1, stride_hp = 1;
  for (int i = 0; i < h; ++i) stride_h *= static_cast<std::size_t>(q);
  for (int i = 0; i < hp; ++i) stride_hp *= static_cast<std::size_t>(q);
  for (std::size_t idx = 0; idx < table.size(); ++idx) {
    const int w = static_cast<int>((idx / stride_h) % q);
    const int wp = static_cast<int>((idx / stride_hp) % q);
    m(w, wp) += table[idx];
  }
  const double scale = std::pow(static_cast<double>(q), 1 - k) / xi;
  for (double& v : m.a) v *= scale;
  return m;
}

inline Matrix phi_of_psi(const ModelSpec& P, const WeightFunction& psi, int h = 0, int hp = 1) {
  return phi_of_table(psi.table, psi.q, psi.k, h, hp, P.xi());
}

// Phi = E[Phi_Psi]; exact for every built-in family
inline Matrix phi_mean(const ModelSpec& P, int h = 0, int hp = 1) {
  return phi_of_table(P.mean_weight_table(), P.q(), P.k, h, hp, P.xi());
}

struct TensorOperator {
  int q = 0;
  Matrix m;             // q^2 x q^2, indices via tensor_index
  Matrix entry_se;      // per-entry standard error when Monte-Carlo built
  bool monte_carlo = false;
};

// Xi = E[Phi_Psi (x) Phi_Psi]
inline TensorOperator xi_operator(const ModelSpec& P, long n_samples = 1000000,
                                  Rng* rng = nullptr, bool force_mc = false) {
  const int q = P.q();
  TensorOperator op;
  op.q = q;
  op.m = Matrix(q * q, q * q);
  auto accumulate = [&](double p, const Matrix& phi) {
    for (int s = 0; s < q; ++s)
      for (int t = 0; t < q; ++t)
        for (int u = 0; u < q; ++u)
          for (int v = 0; v < q; ++v)
            op.m(tensor_index(s, t, q), tensor_index(u, v, q)) += p * phi(s, u) * phi(t, v);
  };
  if (P.support_kind == SupportKind::Finite && !force_mc) {
    for (const auto& [p, w] : P.atoms) accumulate(p, phi_of_psi(P, w));
    return op;
  }
  if (P.family == ModelFamily::GaussianKSpin && !force_mc) {
    // entries of Phi_psi are (1 +- t)/q with t = tanh(J beta); expectations
    // close over E[t] = 0 and E[t^2]
    const double t2 = P.kspin_t2();
    const int k = P.k;
    if (k == 2) {
      Matrix base(q, q);
      for (int s = 0; s < q; ++s)
        for (int u = 0; u < q; ++u) {
          const int sign_su = kspin_sign(s) * kspin_sign(u);
          for (int t = 0; t < q; ++t)
            for (int v = 0; v < q; ++v) {
              const int sign_tv = kspin_sign(t) * kspin_sign(v);
              op.m(tensor_index(s, t, q), tensor_index(u, v, q)) =
                  0.25 * (1.0 + sign_su * sign_tv * t2);
            }
        }
      (void)base;
    } else {
      // k >= 3: every Phi_psi is the uniform matrix
      for (auto& v : op.m.a) v = 1.0 / (q * q);
    }
    return op;
  }
  // generic Monte-Carlo fallback with per-entry standard errors
  if (!rng) throw std::invalid_argument("Monte-Carlo xi_operator needs an RNG");
  op.monte_carlo = true;
  Matrix sum(q * q, q * q), sum2(q * q, q * q);
  for (long i = 0; i < n_samples; ++i) {
    const Matrix phi = phi_of_psi(P, P.sample_weight(*rng));
    for (int s = 0; s < q; ++s)
      for (int t = 0; t < q; ++t)
        for (int u = 0; u < q; ++u)
          for (int v = 0; v < q; ++v) {
            const double x = phi(s, u) * phi(t, v);
            sum(tensor_index(s, t, q), tensor_index(u, v, q)) += x;
            sum2(tensor_index(s, t, q), tensor_index(u, v, q)) += x * x;
          }
  }
  op.entry_se = Matrix(q * q, q * q);
  for (std::size_t i = 0; i < op.m.a.size(); ++i) {
    const double mean = sum.a[i] / n_samples;
    op.m.a[i] = mean;
    const double var = std::max(0.0, sum2.a[i] / n_samples - mean * mean);
    op.entry_se.a[i] = std::sqrt(var / n_samples);
  }
  return op;
}

// orthonormal basis of E = {z : <z, 1 (x) y> = <z, y (x) 1> = 0 for all y},
// as u_i (x) u_j over the Helmert basis of the ones-complement
inline std::vector<std::vector<double>> basis_E(int q) {
  const auto u = ones_complement_basis(q);
  std::vector<std::vector<double>> basis;
  for (int i = 0; i < q - 1; ++i)
    for (int j = 0; j < q - 1; ++j) {
      std::vector<double> z(static_cast<std::size_t>(q) * q, 0.0);
      for (int a = 0; a < q; ++a)
        for (int b = 0; b < q; ++b) z[tensor_index(a, b, q)] = u[i][a] * u[j][b];
      basis.push_back(std::move(z));
    }
  return basis;
}

// E' = E plus the spans of u_i (x) 1/sqrt(q) and 1/sqrt(q) (x) u_i
inline std::vector<std::vector<double>> basis_Eprime(int q) {
  auto basis = basis_E(q);
  const auto u = ones_complement_basis(q);
  const double w = 1.0 / std::sqrt(static_cast<double>(q));
  for (int i = 0; i < q - 1; ++i) {
    std::vector<double> a(static_cast<std::size_t>(q) * q, 0.0);
    std::vector<double> b(static_cast<std::size_t>(q) * q, 0.0);
    for (int s = 0; s < q; ++s)
      for (int t = 0; t < q; ++t) {
        a[tensor_index(s, t, q)] = u[i][s] * w;
        b[tensor_index(s, t, q)] = w * u[i][t];
      }
    basis.push_back(std::move(a));
    basis.push_back(std::move(b));
  }
  return basis;
}

inline Matrix project_onto(const Matrix& big, const std::vector<std::vector<double>>& basis) {
  const int n = static_cast<int>(basis.size());
  const int dim = big.rows;
  Matrix out(n, n);
  for (int a = 0; a < n; ++a) {
    std::vector<double> img(dim, 0.0);
    for (int i = 0; i < dim; ++i) {
      double s = 0.0;
      for (int j = 0; j < dim; ++j) s += big(i, j) * basis[a][j];
      img[i] = s;
    }
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += img[i] * basis[b][i];
      out(b, a) = s;
    }
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double m = 0.5 * (out(a, b) + out(b, a));
      out(a, b) = out(b, a) = m;
    }
  return out;
}

struct SpectralReport {
  std::vector<double> eig_phi;         // descending
  std::vector<double> eig_xi_on_E;     // spectrum of Xi restricted to E, (q-1)^2 values
  std::vector<double> eig_xi_on_Eprime;
  double lambda_hat = 0.0;             // max Eig[Xi] on E
  double d_ks = std::numeric_limits<double>::infinity();
  bool lambda_hat_degenerate = false;
  bool phi_unit_eigenvalue = false;    // exactly one eigenvalue 1 within 1e-9
  bool phi_rest_nonpositive = false;
};

inline double ks_bound_from_lambda(double lambda_hat, int k) {
  if (lambda_hat <= 1e-12) return std::numeric_limits<double>::infinity();
  return 1.0 / ((k - 1) * lambda_hat);
}

inline SpectralReport spectra(const Matrix& phi, const TensorOperator& xi, int k) {
  const int q = phi.rows;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j)
      if (std::abs(phi(i, j) - phi(j, i)) > 1e-7)
        throw std::invalid_argument("phi is not symmetric");
  Matrix phis = phi;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) {
      const double m = 0.5 * (phis(i, j) + phis(j, i));
      phis(i, j) = phis(j, i) = m;
    }
  SpectralReport rep;
  rep.eig_phi = eigen_symmetric(phis).values;
  int units = 0;
  bool rest_ok = true;
  for (double l : rep.eig_phi) {
    if (std::abs(l - 1.0) <= 1e-9)
      ++units;
    else if (l > 1e-9)
      rest_ok = false;
  }
  rep.phi_unit_eigenvalue = units == 1;
  rep.phi_rest_nonpositive = rest_ok;

  rep.eig_xi_on_E = eigen_symmetric(project_onto(xi.m, basis_E(q))).values;
  rep.eig_xi_on_Eprime = eigen_symmetric(project_onto(xi.m, basis_Eprime(q))).values;
  rep.lambda_hat = rep.eig_xi_on_E.empty() ? 0.0 : rep.eig_xi_on_E.front();
  int top_count = 0;
  for (double l : rep.eig_xi_on_E)
    if (std::abs(l - rep.lambda_hat) <= 1e-9) ++top_count;
  rep.lambda_hat_degenerate = top_count > 1;
  rep.d_ks = ks_bound_from_lambda(rep.lambda_hat, k);
  return rep;
}

inline double ks_bound(const SpectralReport& rep, int k) {
  return ks_bound_from_lambda(rep.lambda_hat, k);
}

// -----------------------------------------------------------------------
// dominant symmetric eigenvector of Xi on E and the perturbation family
// pi_{eps,omega}(sigma) = 1/q + eps <eta, e_omega (x) e_sigma>

struct PerturbationFamily {
  int q = 0;
  double lambda_hat = 0.0;
  std::vector<double> sigma;  // unit eigenvector, q^2 entries
  std::vector<double> eta;    // sqrt-coefficient companion, q^2 entries
  double eps0 = 0.0;          // below this every pi_{eps,omega} is a distribution
  bool degenerate = false;

  std::vector<double> pi_eps(double eps, int omega) const {
    std::vector<double> p(q);
    for (int s = 0; s < q; ++s) p[s] = 1.0 / q + eps * eta[tensor_index(omega, s, q)];
    return p;
  }
};

inline PerturbationFamily sigma_perturbation(const TensorOperator& xi) {
  const int q = xi.q;
  const auto be = basis_E(q);
  const Matrix on_e = project_onto(xi.m, be);
  const auto eig = eigen_symmetric(on_e);

  // modulus-maximal eigenvalue and its eigenspace (the paper's lambda)
  double lam_mod = 0.0;
  for (double l : eig.values) lam_mod = std::max(lam_mod, std::abs(l));
  const int n = static_cast<int>(be.size());
  std::vector<std::vector<double>> space;  // eigenspace vectors in E coordinates
  for (int j = 0; j < n; ++j)
    if (std::abs(std::abs(eig.values[j]) - lam_mod) <= 1e-9) {
      std::vector<double> v(n);
      for (int i = 0; i < n; ++i) v[i] = eig.vectors(i, j);
      space.push_back(std::move(v));
    }

  // lift to q^2 coordinates and intersect with the swap-invariant subspace
  auto lift = [&](const std::vector<double>& v) {
    std::vector<double> z(static_cast<std::size_t>(q) * q, 0.0);
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < q * q; ++t) z[t] += v[i] * be[i][t];
    return z;
  };
  std::vector<std::vector<double>> sym_space;
  for (auto& v : space) {
    auto z = lift(v);
    std::vector<double> s(z.size());
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b)
        s[tensor_index(a, b, q)] =
            0.5 * (z[tensor_index(a, b, q)] + z[tensor_index(b, a, q)]);
    double norm = 0.0;
    for (double x : s) norm += x * x;
    if (norm < 1e-18) continue;
    // Gram-Schmidt against what we already kept
    for (const auto& prev : sym_space) {
      double dot = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) dot += s[i] * prev[i];
      for (std::size_t i = 0; i < s.size(); ++i) s[i] -= dot * prev[i];
    }
    norm = 0.0;
    for (double x : s) norm += x * x;
    if (norm < 1e-18) continue;
    norm = std::sqrt(norm);
    for (double& x : s) x /= norm;
    sym_space.push_back(std::move(s));
  }
  if (sym_space.empty())
    throw std::runtime_error("degenerate top eigenspace contains no swap-invariant vector");

  // deterministic pick: unit vector maximizing the first coordinate, then the
  // second, and so on (ties broken lexicographically)
  std::vector<double> z;
  {
    std::vector<std::vector<double>> remaining = sym_space;
    for (int coord = 0; coord < q * q && z.empty(); ++coord) {
      std::vector<double> proj(static_cast<std::size_t>(q) * q, 0.0);
      for (const auto& b : remaining)
        for (std::size_t i = 0; i < proj.size(); ++i) proj[i] += b[coord] * b[i];
      double norm = 0.0;
      for (double x : proj) norm += x * x;
      if (norm > 1e-16) {
        norm = std::sqrt(norm);
        for (double& x : proj) x /= norm;
        if (proj[coord] < 0.0)
          for (double& x : proj) x = -x;
        z = std::move(proj);
      }
    }
    if (z.empty()) z = sym_space.front();
  }

  // spectral decomposition of the symmetric matrix iota(z) on the
  // ones-complement; flipping signs of the coefficients yields Sigma
  Matrix zm(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) zm(a, b) = z[tensor_index(a, b, q)];
  const auto zdec = eigen_symmetric(zm);

  PerturbationFamily fam;
  fam.q = q;
  fam.degenerate = space.size() > 1;
  fam.sigma.assign(static_cast<std::size_t>(q) * q, 0.0);
  fam.eta.assign(static_cast<std::size_t>(q) * q, 0.0);
  for (int j = 0; j < q; ++j) {
    const double w = std::abs(zdec.values[j]);
    if (w < 1e-14) continue;
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) {
        const double uu = zdec.vectors(a, j) * zdec.vectors(b, j);
        fam.sigma[tensor_index(a, b, q)] += w * uu;
        fam.eta[tensor_index(a, b, q)] += std::sqrt(w) * uu;
      }
  }
  // eigenvalue to report: <Xi sigma, sigma>
  double lam = 0.0;
  {
    std::vector<double> img(static_cast<std::size_t>(q) * q, 0.0);
    for (int i = 0; i < q * q; ++i)
      for (int j = 0; j < q * q; ++j) img[i] += xi.m(i, j) * fam.sigma[j];
    for (int i = 0; i < q * q; ++i) lam += img[i] * fam.sigma[i];
    double resid = 0.0;
    for (int i = 0; i < q * q; ++i) resid += (img[i] - lam * fam.sigma[i]) * (img[i] - lam * fam.sigma[i]);
    if (std::sqrt(resid) > 1e-8)
      throw std::runtime_error("sigma is not an eigenvector of Xi within tolerance");
  }
  fam.lambda_hat = lam;
  double max_eta = 0.0;
  for (double x : fam.eta) max_eta = std::max(max_eta, std::abs(x));
  fam.eps0 = max_eta > 0.0 ? 1.0 / (q * max_eta) : std::numeric_limits<double>::infinity();
  return fam;
}

// fourth-order coefficient of B(d,P,pi_eps) - B(d,P,pi_0); the sign flips
// exactly at d = 1/((k-1) lambda_hat)
inline double taylor_eps4_coefficient(double d, int k, double lambda_hat) {
  return d * (k - 1) / 4.0 * ((k - 1) * d * lambda_hat * lambda_hat - lambda_hat);
}

}  // namespace factorphase
