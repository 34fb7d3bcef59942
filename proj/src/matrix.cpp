#include "swd/matrix.hpp"

#include <cmath>

namespace swd {

DenseMatrix identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

bool all_finite(const DenseMatrix& m) {
  for (double x : m.a)
    if (!std::isfinite(x)) return false;
  return true;
}

void require_finite(const DenseMatrix& m, const std::string& what) {
  if (!all_finite(m)) throw NonFiniteInput("non-finite values in " + what);
}

double fro_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (double x : m.a) s += x * x;
  return std::sqrt(s);
}

double max_abs_diff(const DenseMatrix& x, const DenseMatrix& y) {
  if (!x.same_shape(y)) throw ShapeError("max_abs_diff: shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < x.a.size(); ++i) d = std::max(d, std::fabs(x.a[i] - y.a[i]));
  return d;
}

double orthogonality_drift(const DenseMatrix& q) {
  // ||Q^T Q - I||_F without forming the product matrix.
  double s = 0.0;
  for (std::size_t i = 0; i < q.cols; ++i) {
    for (std::size_t j = 0; j < q.cols; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < q.rows; ++k) d += q(k, i) * q(k, j);
      if (i == j) d -= 1.0;
      s += d * d;
    }
  }
  return std::sqrt(s);
}

}  // namespace swd
