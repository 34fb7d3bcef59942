#pragma once

#include <cstddef>
#include <vector>

#include "swd/matrix.hpp"

// Dense compute kernels. Every kernel has a `_serial` reference and an
// OpenMP-parallel front door. Parallel variants split work by output row and
// run the identical per-row routine, so for any thread count the result is
// bitwise equal to the serial one (each output element is written by exactly
// one iteration; inner reductions stay sequential). Tests assert exact
// equality and the bench target times the two against each other.

namespace swd::kernels {

// C = op(A) * op(B); op is transpose when the flag is set.
void gemm_serial(const DenseMatrix& a, bool ta, const DenseMatrix& b, bool tb,
                 DenseMatrix& c);
void gemm(const DenseMatrix& a, bool ta, const DenseMatrix& b, bool tb,
          DenseMatrix& c);

// Row-wise softmax with max subtraction (stable for large magnitudes).
void softmax_rows_serial(const DenseMatrix& x, DenseMatrix& y);
void softmax_rows(const DenseMatrix& x, DenseMatrix& y);

// Per-row minima/maxima; arg indices record the first occurrence.
void row_min_serial(const DenseMatrix& x, DenseMatrix& val,
                    std::vector<std::size_t>& arg);
void row_min(const DenseMatrix& x, DenseMatrix& val,
             std::vector<std::size_t>& arg);
void row_max_serial(const DenseMatrix& x, DenseMatrix& val,
                    std::vector<std::size_t>& arg);
void row_max(const DenseMatrix& x, DenseMatrix& val,
             std::vector<std::size_t>& arg);

// Piecewise-linear curves per row, knot positions uniform on [0, 1] with
// values.cols - 1 segments. `seg` records the segment used per query so the
// backward pass does not repeat the search.
//
// interp_eval_rows: y = F(q). Queries are clamped to [0, 1]; a query exactly
// on an interior knot uses the segment ending there (left limit).
void interp_eval_rows_serial(const DenseMatrix& values, const DenseMatrix& q,
                             DenseMatrix& y, std::vector<std::size_t>& seg);
void interp_eval_rows(const DenseMatrix& values, const DenseMatrix& q,
                      DenseMatrix& y, std::vector<std::size_t>& seg);

// interp_inverse_rows: t = F^{-1}(p) for per-row nondecreasing values.
// p at or below the first value maps to position 0, above the last to 1 (both
// recorded as seg == values.cols, meaning clamped / zero slope); a flat
// stretch maps to its left edge.
void interp_inverse_rows_serial(const DenseMatrix& values, const DenseMatrix& p,
                                DenseMatrix& t, std::vector<std::size_t>& seg);
void interp_inverse_rows(const DenseMatrix& values, const DenseMatrix& p,
                         DenseMatrix& t, std::vector<std::size_t>& seg);

// Ascending sort of each row; perm maps output slot -> source column, ties
// keep source order.
void sort_rows_serial(const DenseMatrix& x, DenseMatrix& sorted,
                      std::vector<std::size_t>& perm);
void sort_rows(const DenseMatrix& x, DenseMatrix& sorted,
               std::vector<std::size_t>& perm);

// Order-statistics transport per row: entry i of the output is the target
// value whose rank equals the rank of source entry i.
void sort_transport_rows_serial(const DenseMatrix& src, const DenseMatrix& dst,
                                DenseMatrix& out);
void sort_transport_rows(const DenseMatrix& src, const DenseMatrix& dst,
                         DenseMatrix& out);

}  // namespace swd::kernels
