#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "swd/errors.hpp"

namespace swd {

// Dense row-major matrix of doubles. Everything in this library is f64.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }

  std::size_t size() const { return a.size(); }
  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

  // Reuses the allocation when the element count already matches.
  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    a.assign(r * c, 0.0);
  }
};

DenseMatrix identity(std::size_t n);
DenseMatrix transpose(const DenseMatrix& m);

bool all_finite(const DenseMatrix& m);
void require_finite(const DenseMatrix& m, const std::string& what);

double fro_norm(const DenseMatrix& m);
double max_abs_diff(const DenseMatrix& x, const DenseMatrix& y);

// ||Q^T Q - I||_F, the orthogonality drift used by the Stiefel invariants.
double orthogonality_drift(const DenseMatrix& q);

}  // namespace swd
