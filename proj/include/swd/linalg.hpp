#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "swd/matrix.hpp"
#include "swd/rng.hpp"

namespace swd {

// Thin QR of a square or tall matrix (rows >= cols) via Householder
// reflections. R's diagonal is made positive by sign flips, which pins down
// the unique Q of the decomposition; throws RankDeficient (naming the column)
// when a diagonal entry of R falls below 1e-12 in magnitude.
struct QrResult {
  DenseMatrix q;  // rows x cols, orthonormal columns
  DenseMatrix r;  // cols x cols, upper triangular, positive diagonal
};
QrResult qr_decompose(const DenseMatrix& m);

// Q factor only; the common case.
DenseMatrix qr_orthonormalize(const DenseMatrix& m);

// Haar-ish random orthogonal n x n: QR of a standard Gaussian matrix.
DenseMatrix random_orthogonal(RngStream& rng, std::size_t n);

// Symmetric eigendecomposition by cyclic Jacobi sweeps, for the small
// matrices used in evaluation (dim <= 8 enforced). Eigenvalues descending,
// eigenvectors in the columns of `vectors`.
struct EigResult {
  std::vector<double> values;
  DenseMatrix vectors;
};
EigResult sym_eig_small(const DenseMatrix& m);

// Principal square root of a symmetric PSD matrix. Eigenvalues in
// [-1e-10, 0) are clamped to zero (roundoff from products of factors);
// anything more negative throws NotPSD.
DenseMatrix sqrtm_psd(const DenseMatrix& m);

// Stable ascending sort returning (sorted values, permutation of sources).
std::pair<std::vector<double>, std::vector<std::size_t>> sort_with_ranks(
    const std::vector<double>& v);

}  // namespace swd
