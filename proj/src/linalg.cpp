#include "swd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "swd/errors.hpp"
#include "swd/kernels.hpp"

namespace swd {

QrResult qr_decompose(const DenseMatrix& m) {
  const std::size_t rows = m.rows, cols = m.cols;
  if (rows < cols) throw ShapeError("qr: need rows >= cols");
  require_finite(m, "qr input");

  DenseMatrix r = m;                      // reduced in place to upper triangular
  DenseMatrix qt = identity(rows);        // accumulates reflections, row-major Q^T
  std::vector<double> v(rows);

  for (std::size_t k = 0; k < cols; ++k) {
    // Householder vector for column k below the diagonal.
    double norm = 0.0;
    for (std::size_t i = k; i < rows; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    if (norm <= 1e-12)
      throw RankDeficient("qr: column " + std::to_string(k) +
                          " is numerically dependent");
    const double alpha = r(k, k) >= 0.0 ? -norm : norm;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < rows; ++i) {
      v[i] = r(i, k) - (i == k ? alpha : 0.0);
      vnorm2 += v[i] * v[i];
    }
    if (vnorm2 > 0.0) {
      const double beta = 2.0 / vnorm2;
      for (std::size_t j = k; j < cols; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < rows; ++i) dot += v[i] * r(i, j);
        dot *= beta;
        for (std::size_t i = k; i < rows; ++i) r(i, j) -= dot * v[i];
      }
      for (std::size_t j = 0; j < rows; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < rows; ++i) dot += v[i] * qt(i, j);
        dot *= beta;
        for (std::size_t i = k; i < rows; ++i) qt(i, j) -= dot * v[i];
      }
    }
    r(k, k) = alpha;
    for (std::size_t i = k + 1; i < rows; ++i) r(i, k) = 0.0;
  }

  // Flip signs so R's diagonal is positive; Q's columns flip to match.
  QrResult out;
  out.q.resize(rows, cols);
  out.r.resize(cols, cols);
  for (std::size_t k = 0; k < cols; ++k) {
    const double s = r(k, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = k; j < cols; ++j) out.r(k, j) = s * r(k, j);
    for (std::size_t i = 0; i < rows; ++i) out.q(i, k) = s * qt(k, i);
  }
  return out;
}

DenseMatrix qr_orthonormalize(const DenseMatrix& m) {
  return qr_decompose(m).q;
}

DenseMatrix random_orthogonal(RngStream& rng, std::size_t n) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    DenseMatrix g = rng.gaussian_matrix(n, n);
    try {
      return qr_orthonormalize(g);
    } catch (const RankDeficient&) {
      // Astronomically unlikely; redraw.
    }
  }
  throw ConvergenceFailure("random_orthogonal: repeated rank-deficient draws");
}

EigResult sym_eig_small(const DenseMatrix& m) {
  const std::size_t n = m.rows;
  if (m.cols != n) throw ShapeError("sym_eig: matrix not square");
  if (n > 8) throw TooLarge("sym_eig: dim " + std::to_string(n) + " > 8");
  require_finite(m, "sym_eig input");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) >
          1e-9 * (1.0 + std::abs(m(i, j)) + std::abs(m(j, i))))
        throw DomainError("sym_eig: matrix not symmetric");

  DenseMatrix a = m;
  DenseMatrix vmat = identity(n);
  double total = 0.0;
  for (const double x : a.a) total += x * x;
  const double stop = 1e-26 * std::max(1.0, total);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < stop) break;
    if (sweep == 99)
      throw ConvergenceFailure("sym_eig: jacobi sweeps did not converge");
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double apj = a(p, j), aqj = a(q, j);
          a(p, j) = c * apj - s * aqj;
          a(q, j) = s * apj + c * aqj;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = vmat(i, p), viq = vmat(i, q);
          vmat(i, p) = c * vip - s * viq;
          vmat(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a(x, x) > a(y, y);
  });
  EigResult out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = vmat(i, order[k]);
  }
  return out;
}

DenseMatrix sqrtm_psd(const DenseMatrix& m) {
  if (m.rows != m.cols) throw ShapeError("sqrtm: matrix not square");
  // Inputs are products of factors, so symmetrize away their roundoff skew
  // before the eigensolver (it rejects anything beyond roundoff itself).
  DenseMatrix sym = m;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      sym(i, j) = 0.5 * (m(i, j) + m(j, i));
  EigResult eig = sym_eig_small(sym);
  const std::size_t n = m.rows;
  std::vector<double> roots(n);
  for (std::size_t k = 0; k < n; ++k) {
    double lambda = eig.values[k];
    if (lambda < 0.0) {
      if (lambda < -1e-10)
        throw NotPSD("sqrtm: eigenvalue " + std::to_string(lambda));
      lambda = 0.0;
    }
    roots[k] = std::sqrt(lambda);
  }
  // V * diag(sqrt(lambda)) * V^T
  DenseMatrix scaled = eig.vectors;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) scaled(i, k) *= roots[k];
  DenseMatrix out;
  kernels::gemm_serial(scaled, false, eig.vectors, true, out);
  return out;
}

std::pair<std::vector<double>, std::vector<std::size_t>> sort_with_ranks(
    const std::vector<double>& v) {
  std::vector<std::size_t> perm(v.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> sorted(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sorted[i] = v[perm[i]];
  return {std::move(sorted), std::move(perm)};
}

}  // namespace swd
