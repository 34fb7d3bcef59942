#include "swd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "swd/errors.hpp"

namespace swd::kernels {

namespace {

void check_gemm_shapes(const DenseMatrix& a, bool ta, const DenseMatrix& b,
                       bool tb, DenseMatrix& c) {
  const std::size_t m = ta ? a.cols : a.rows;
  const std::size_t k = ta ? a.rows : a.cols;
  const std::size_t kb = tb ? b.cols : b.rows;
  const std::size_t n = tb ? b.rows : b.cols;
  if (k != kb)
    throw ShapeError("gemm: inner dims " + std::to_string(k) + " vs " +
                     std::to_string(kb));
  if (c.rows != m || c.cols != n) c.resize(m, n);
}

// One output row of C = op(A) * op(B). Four loop shapes so the inner loop
// stays unit-stride where the layout allows it.
void gemm_row(const DenseMatrix& a, bool ta, const DenseMatrix& b, bool tb,
              DenseMatrix& c, std::size_t i) {
  const std::size_t n = c.cols;
  const std::size_t k = ta ? a.rows : a.cols;
  double* ci = c.row(i);
  std::fill(ci, ci + n, 0.0);
  if (!tb) {
    // C[i,:] += op(A)[i,p] * B[p,:], streaming rows of B.
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ta ? a(p, i) : a(i, p);
      if (aip == 0.0) continue;
      const double* bp = b.row(p);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  } else {
    // C[i,j] = dot(op(A)[i,:], B[j,:]).
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      if (!ta) {
        const double* ai = a.row(i);
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) s += a(p, i) * bj[p];
      }
      ci[j] = s;
    }
  }
}

void softmax_row(const DenseMatrix& x, DenseMatrix& y, std::size_t i) {
  const std::size_t n = x.cols;
  const double* xi = x.row(i);
  double* yi = y.row(i);
  double m = xi[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, xi[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    yi[j] = std::exp(xi[j] - m);
    s += yi[j];
  }
  const double inv = 1.0 / s;
  for (std::size_t j = 0; j < n; ++j) yi[j] *= inv;
}

template <bool kMax>
void extreme_row(const DenseMatrix& x, DenseMatrix& val,
                 std::vector<std::size_t>& arg, std::size_t i) {
  const double* xi = x.row(i);
  std::size_t best = 0;
  for (std::size_t j = 1; j < x.cols; ++j) {
    if (kMax ? xi[j] > xi[best] : xi[j] < xi[best]) best = j;
  }
  val(i, 0) = xi[best];
  arg[i] = best;
}

void interp_eval_row(const DenseMatrix& values, const DenseMatrix& q,
                     DenseMatrix& y, std::vector<std::size_t>& seg,
                     std::size_t i) {
  const std::size_t nk = values.cols;  // knot count, nk - 1 segments
  const std::size_t segs = nk - 1;
  const double* v = values.row(i);
  const double* qi = q.row(i);
  double* yi = y.row(i);
  for (std::size_t j = 0; j < q.cols; ++j) {
    const double t = std::clamp(qi[j], 0.0, 1.0);
    // Query on an interior knot resolves to the segment ending there.
    double kf = std::ceil(t * static_cast<double>(segs)) - 1.0;
    std::size_t k =
        kf < 0.0 ? 0 : std::min<std::size_t>(static_cast<std::size_t>(kf), segs - 1);
    const double x0 = static_cast<double>(k) / static_cast<double>(segs);
    const double frac = (t - x0) * static_cast<double>(segs);
    yi[j] = v[k] + (v[k + 1] - v[k]) * frac;
    seg[i * q.cols + j] = k;
  }
}

void interp_inverse_row(const DenseMatrix& values, const DenseMatrix& p,
                        DenseMatrix& t, std::vector<std::size_t>& seg,
                        std::size_t i) {
  const std::size_t nk = values.cols;
  const std::size_t segs = nk - 1;
  const double dx = 1.0 / static_cast<double>(segs);
  const double* v = values.row(i);
  const double* pi = p.row(i);
  double* ti = t.row(i);
  for (std::size_t j = 0; j < p.cols; ++j) {
    const double pj = pi[j];
    if (pj <= v[0]) {
      ti[j] = 0.0;
      seg[i * p.cols + j] = nk;  // clamped: no segment, zero gradient
      continue;
    }
    if (pj > v[segs]) {
      ti[j] = 1.0;
      seg[i * p.cols + j] = nk;
      continue;
    }
    // First knot with value >= p; the segment ends there. A flat run maps to
    // its left edge because lower_bound steps past the equal knots before it.
    const double* lb = std::lower_bound(v + 1, v + nk, pj);
    const std::size_t k = static_cast<std::size_t>(lb - v) - 1;
    const double dv = v[k + 1] - v[k];
    const double frac = dv > 0.0 ? (pj - v[k]) / dv : 0.0;
    ti[j] = (static_cast<double>(k) + frac) * dx;
    seg[i * p.cols + j] = k;
  }
}

void sort_row(const DenseMatrix& x, DenseMatrix& sorted,
              std::vector<std::size_t>& perm, std::size_t i) {
  const std::size_t n = x.cols;
  const double* xi = x.row(i);
  std::size_t* pi = perm.data() + i * n;
  std::iota(pi, pi + n, std::size_t{0});
  std::stable_sort(pi, pi + n,
                   [xi](std::size_t a, std::size_t b) { return xi[a] < xi[b]; });
  double* si = sorted.row(i);
  for (std::size_t j = 0; j < n; ++j) si[j] = xi[pi[j]];
}

void sort_transport_row(const DenseMatrix& src, const DenseMatrix& dst,
                        DenseMatrix& out, std::vector<std::size_t>& scratch,
                        std::size_t i) {
  const std::size_t n = src.cols;
  const double* si = src.row(i);
  const double* di = dst.row(i);
  std::size_t* sp = scratch.data();        // rank order of source entries
  std::size_t* dp = scratch.data() + n;    // rank order of target entries
  std::iota(sp, sp + n, std::size_t{0});
  std::iota(dp, dp + n, std::size_t{0});
  std::stable_sort(sp, sp + n,
                   [si](std::size_t a, std::size_t b) { return si[a] < si[b]; });
  std::stable_sort(dp, dp + n,
                   [di](std::size_t a, std::size_t b) { return di[a] < di[b]; });
  double* oi = out.row(i);
  for (std::size_t r = 0; r < n; ++r) oi[sp[r]] = di[dp[r]];
}

}  // namespace

void gemm_serial(const DenseMatrix& a, bool ta, const DenseMatrix& b, bool tb,
                 DenseMatrix& c) {
  check_gemm_shapes(a, ta, b, tb, c);
  for (std::size_t i = 0; i < c.rows; ++i) gemm_row(a, ta, b, tb, c, i);
}

void gemm(const DenseMatrix& a, bool ta, const DenseMatrix& b, bool tb,
          DenseMatrix& c) {
  check_gemm_shapes(a, ta, b, tb, c);
  const std::int64_t m = static_cast<std::int64_t>(c.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    gemm_row(a, ta, b, tb, c, static_cast<std::size_t>(i));
}

void softmax_rows_serial(const DenseMatrix& x, DenseMatrix& y) {
  y.resize(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) softmax_row(x, y, i);
}

void softmax_rows(const DenseMatrix& x, DenseMatrix& y) {
  y.resize(x.rows, x.cols);
  const std::int64_t m = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    softmax_row(x, y, static_cast<std::size_t>(i));
}

void row_min_serial(const DenseMatrix& x, DenseMatrix& val,
                    std::vector<std::size_t>& arg) {
  val.resize(x.rows, 1);
  arg.assign(x.rows, 0);
  for (std::size_t i = 0; i < x.rows; ++i) extreme_row<false>(x, val, arg, i);
}

void row_min(const DenseMatrix& x, DenseMatrix& val,
             std::vector<std::size_t>& arg) {
  val.resize(x.rows, 1);
  arg.assign(x.rows, 0);
  const std::int64_t m = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    extreme_row<false>(x, val, arg, static_cast<std::size_t>(i));
}

void row_max_serial(const DenseMatrix& x, DenseMatrix& val,
                    std::vector<std::size_t>& arg) {
  val.resize(x.rows, 1);
  arg.assign(x.rows, 0);
  for (std::size_t i = 0; i < x.rows; ++i) extreme_row<true>(x, val, arg, i);
}

void row_max(const DenseMatrix& x, DenseMatrix& val,
             std::vector<std::size_t>& arg) {
  val.resize(x.rows, 1);
  arg.assign(x.rows, 0);
  const std::int64_t m = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    extreme_row<true>(x, val, arg, static_cast<std::size_t>(i));
}

namespace {

void check_interp_shapes(const DenseMatrix& values, const DenseMatrix& q) {
  if (values.rows != q.rows)
    throw ShapeError("interp: values rows " + std::to_string(values.rows) +
                     " vs query rows " + std::to_string(q.rows));
  if (values.cols < 2) throw ShapeError("interp: need at least 2 knots");
}

}  // namespace

void interp_eval_rows_serial(const DenseMatrix& values, const DenseMatrix& q,
                             DenseMatrix& y, std::vector<std::size_t>& seg) {
  check_interp_shapes(values, q);
  y.resize(q.rows, q.cols);
  seg.assign(q.size(), 0);
  for (std::size_t i = 0; i < q.rows; ++i) interp_eval_row(values, q, y, seg, i);
}

void interp_eval_rows(const DenseMatrix& values, const DenseMatrix& q,
                      DenseMatrix& y, std::vector<std::size_t>& seg) {
  check_interp_shapes(values, q);
  y.resize(q.rows, q.cols);
  seg.assign(q.size(), 0);
  const std::int64_t m = static_cast<std::int64_t>(q.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    interp_eval_row(values, q, y, seg, static_cast<std::size_t>(i));
}

void interp_inverse_rows_serial(const DenseMatrix& values, const DenseMatrix& p,
                                DenseMatrix& t, std::vector<std::size_t>& seg) {
  check_interp_shapes(values, p);
  t.resize(p.rows, p.cols);
  seg.assign(p.size(), 0);
  for (std::size_t i = 0; i < p.rows; ++i)
    interp_inverse_row(values, p, t, seg, i);
}

void interp_inverse_rows(const DenseMatrix& values, const DenseMatrix& p,
                         DenseMatrix& t, std::vector<std::size_t>& seg) {
  check_interp_shapes(values, p);
  t.resize(p.rows, p.cols);
  seg.assign(p.size(), 0);
  const std::int64_t m = static_cast<std::int64_t>(p.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    interp_inverse_row(values, p, t, seg, static_cast<std::size_t>(i));
}

void sort_rows_serial(const DenseMatrix& x, DenseMatrix& sorted,
                      std::vector<std::size_t>& perm) {
  sorted.resize(x.rows, x.cols);
  perm.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.rows; ++i) sort_row(x, sorted, perm, i);
}

void sort_rows(const DenseMatrix& x, DenseMatrix& sorted,
               std::vector<std::size_t>& perm) {
  sorted.resize(x.rows, x.cols);
  perm.assign(x.size(), 0);
  const std::int64_t m = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    sort_row(x, sorted, perm, static_cast<std::size_t>(i));
}

void sort_transport_rows_serial(const DenseMatrix& src, const DenseMatrix& dst,
                                DenseMatrix& out) {
  if (src.rows != dst.rows || src.cols != dst.cols)
    throw ShapeError("sort_transport: source/target shapes differ");
  out.resize(src.rows, src.cols);
  std::vector<std::size_t> scratch(2 * src.cols);
  for (std::size_t i = 0; i < src.rows; ++i)
    sort_transport_row(src, dst, out, scratch, i);
}

void sort_transport_rows(const DenseMatrix& src, const DenseMatrix& dst,
                         DenseMatrix& out) {
  if (src.rows != dst.rows || src.cols != dst.cols)
    throw ShapeError("sort_transport: source/target shapes differ");
  out.resize(src.rows, src.cols);
  const std::int64_t m = static_cast<std::int64_t>(src.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    std::vector<std::size_t> scratch(2 * src.cols);
    sort_transport_row(src, dst, out, scratch, static_cast<std::size_t>(i));
  }
}

}  // namespace swd::kernels
