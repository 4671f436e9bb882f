#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <vector>

namespace factorphase {

// dense row-major matrix, small sizes only (q <= 32, so at most 1024 x 1024)
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Matrix matmul(const Matrix& x, const Matrix& y) {
  assert(x.cols == y.rows);
  Matrix z(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int l = 0; l < x.cols; ++l) {
      const double v = x(i, l);
      if (v == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) z(i, j) += v * y(l, j);
    }
  return z;
}

inline double trace(const Matrix& m) {
  double t = 0.0;
  for (int i = 0; i < std::min(m.rows, m.cols); ++i) t += m(i, i);
  return t;
}

inline double max_abs_diff(const Matrix& x, const Matrix& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.a.size(); ++i) d = std::max(d, std::abs(x.a[i] - y.a[i]));
  return d;
}

struct EigenSym {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j is the eigenvector of values[j]
};

// cyclic Jacobi; plenty accurate for the tiny symmetric matrices used here
inline EigenSym eigen_symmetric(Matrix m) {
  const int n = m.rows;
  assert(n == m.cols);
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (off < 1e-300) break;
    const double thresh = sweep < 3 ? 0.2 * off / (n * n) : 0.0;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(m(p, p)) + g == std::abs(m(p, p)) &&
            std::abs(m(q, q)) + g == std::abs(m(q, q))) {
          m(p, q) = m(q, p) = 0.0;
          continue;
        }
        if (apq * apq <= thresh) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double mip = m(i, p), miq = m(i, q);
          m(i, p) = c * mip - s * miq;
          m(i, q) = s * mip + c * miq;
        }
        for (int i = 0; i < n; ++i) {
          const double mpi = m(p, i), mqi = m(q, i);
          m(p, i) = c * mpi - s * mqi;
          m(q, i) = s * mpi + c * mqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return m(i, i) > m(j, j); });
  EigenSym out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    out.values[j] = m(order[j], order[j]);
    for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

// orthonormal basis of the subspace orthogonal to the all-ones vector
// (rows of the Helmert matrix, a fixed deterministic choice)
inline std::vector<std::vector<double>> ones_complement_basis(int q) {
  std::vector<std::vector<double>> basis;
  for (int i = 1; i < q; ++i) {
    std::vector<double> u(q, 0.0);
    const double norm = std::sqrt(static_cast<double>(i) * (i + 1));
    for (int j = 0; j < i; ++j) u[j] = 1.0 / norm;
    u[i] = -static_cast<double>(i) / norm;
    basis.push_back(std::move(u));
  }
  return basis;
}

}  // namespace factorphase
