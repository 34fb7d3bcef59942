#pragma once

#include <cstddef>
#include <vector>

#include "swd/matrix.hpp"
#include "swd/rng.hpp"
#include "swd/tape.hpp"

// Sliced optimal transport on batches stored with samples as COLUMNS:
// a d x b matrix holds b points of dimension d. Rotations then compose on
// the left, and each row of O^T X is one projected 1-D sample set.

namespace swd {

// Affine map of each row onto [0, 1]. A degenerate row (max == min within
// 1e-12) maps to all 0.5 with range recorded as 0, so undoing the map
// returns the constant row.
struct RescaleResult {
  DenseMatrix scaled;
  std::vector<double> lo;     // per-row minimum
  std::vector<double> range;  // per-row max - min (0 when degenerate)
};
RescaleResult rescale_unit(const DenseMatrix& rows);

// Soft assignment histogram: values in [0, 1], bin centers (k + 1/2) / bins,
// weight of value v on bin k proportional to exp(-alpha (v - c_k)^2),
// normalized over bins, averaged over the row. Rows sum to 1. Large alpha
// approaches the hard histogram.
DenseMatrix soft_histogram(const DenseMatrix& unit_values, std::size_t bins,
                           double alpha);

// Cumulative distribution at the bin edges 0, 1/l, ..., 1 from per-row bin
// masses: a leading exact 0 and a trailing exact 1 (total mass normalized
// away; all-zero rows are a DomainError).
DenseMatrix cdf_from_pdf(const DenseMatrix& pdf);

// Piecewise-linear CDF evaluation / inverse per row (thin wrappers over the
// interpolation kernels; see kernels.hpp for the edge conventions).
DenseMatrix cdf_eval(const DenseMatrix& cdf, const DenseMatrix& queries);
DenseMatrix cdf_inverse(const DenseMatrix& cdf, const DenseMatrix& probs);

// Exact 1-D p-Wasserstein between equal-size empirical samples:
// sort both, pair order statistics, ( mean |x_(i) - y_(i)|^p )^(1/p).
double wasserstein_1d_exact(const std::vector<double>& x,
                            const std::vector<double>& y, double p);

// Appends the differentiable transport block to a tape: rotate by o
// (square, orthogonal), rescale rows to [0,1], soft-histogram CDFs of both
// batches, push y through F_y then F_z^{-1}, undo z's rescale, rotate back.
// y, z: r x b nodes; o: r x r node. Returns the transformed y node (r x b).
// rescale_grad picks whether gradients flow through the row min/max used by
// the rescale (kFlow) or treat them as constants (kStop).
NodeId append_transport_block(Tape& t, NodeId y, NodeId z, NodeId o,
                              std::size_t bins, double alpha,
                              GradMode rescale_grad = GradMode::kFlow);

// One-shot evaluation of the block on plain matrices.
DenseMatrix primal_block_forward(const DenseMatrix& y, const DenseMatrix& z,
                                 const DenseMatrix& o, std::size_t bins,
                                 double alpha,
                                 GradMode rescale_grad = GradMode::kFlow);

// Iterative distribution transfer: `iters` rounds of (random rotation, exact
// per-row order-statistics transport, rotate back). Equal batch sizes.
DenseMatrix idt_transfer(const DenseMatrix& src, const DenseMatrix& dst,
                         std::size_t iters, RngStream& rng);

// Monte Carlo sliced p-Wasserstein over `directions` Gaussian-normalized
// unit projections. std_error is the delta-method standard error of value.
struct McSwdResult {
  double value = 0.0;
  double std_error = 0.0;
};
McSwdResult mc_swd(const DenseMatrix& x, const DenseMatrix& y,
                   std::size_t directions, double p, RngStream& rng);

// Smallest eps for which the one-sided tail bound exp(-2 b eps^2) is valid.
double dkw_min_eps(std::size_t b);

// Empirical check of the one-sided uniform-CDF deviation bound: frequency of
// max_i (i/b - U_(i)) > eps over `trials` batches of b uniforms, against
// exp(-2 b eps^2). Preconditions: eps >= dkw_min_eps(b), trials >= 1000.
struct DkwReport {
  double frequency = 0.0;
  double bound = 0.0;
  double std_error = 0.0;  // of the empirical frequency
  bool within = false;     // frequency <= bound + 3 std_error
};
DkwReport dkw_check(std::size_t b, double eps, std::size_t trials,
                    RngStream& rng);

}  // namespace swd
