#include "swd/sliced_ot.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swd/errors.hpp"
#include "swd/kernels.hpp"
#include "swd/linalg.hpp"

namespace swd {

namespace {
constexpr double kDegenerate = 1e-12;
}

RescaleResult rescale_unit(const DenseMatrix& rows) {
  require_finite(rows, "rescale_unit input");
  RescaleResult out;
  out.scaled.resize(rows.rows, rows.cols);
  out.lo.resize(rows.rows);
  out.range.resize(rows.rows);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const double* x = rows.row(i);
    double lo = x[0], hi = x[0];
    for (std::size_t j = 1; j < rows.cols; ++j) {
      lo = std::min(lo, x[j]);
      hi = std::max(hi, x[j]);
    }
    out.lo[i] = lo;
    double* s = out.scaled.row(i);
    if (hi - lo <= kDegenerate) {
      out.range[i] = 0.0;
      std::fill(s, s + rows.cols, 0.5);
    } else {
      out.range[i] = hi - lo;
      const double inv = 1.0 / (hi - lo);
      for (std::size_t j = 0; j < rows.cols; ++j) s[j] = (x[j] - lo) * inv;
    }
  }
  return out;
}

DenseMatrix soft_histogram(const DenseMatrix& unit_values, std::size_t bins,
                           double alpha) {
  if (bins < 2) throw DomainError("soft_histogram: need at least 2 bins");
  if (!(alpha > 0.0)) throw DomainError("soft_histogram: alpha must be > 0");
  require_finite(unit_values, "soft_histogram input");
  const std::size_t r = unit_values.rows, b = unit_values.cols;
  DenseMatrix h(r, bins);
  std::vector<double> w(bins);
  for (std::size_t i = 0; i < r; ++i) {
    const double* v = unit_values.row(i);
    double* hi = h.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      double best = -1e300;
      for (std::size_t k = 0; k < bins; ++k) {
        const double c = (static_cast<double>(k) + 0.5) / static_cast<double>(bins);
        w[k] = -alpha * (v[j] - c) * (v[j] - c);
        best = std::max(best, w[k]);
      }
      double z = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        w[k] = std::exp(w[k] - best);
        z += w[k];
      }
      for (std::size_t k = 0; k < bins; ++k) hi[k] += w[k] / z;
    }
    for (std::size_t k = 0; k < bins; ++k) hi[k] /= static_cast<double>(b);
  }
  return h;
}

DenseMatrix cdf_from_pdf(const DenseMatrix& pdf) {
  require_finite(pdf, "cdf_from_pdf input");
  DenseMatrix cdf(pdf.rows, pdf.cols + 1);
  for (std::size_t i = 0; i < pdf.rows; ++i) {
    const double* p = pdf.row(i);
    double* c = cdf.row(i);
    c[0] = 0.0;
    double run = 0.0;
    for (std::size_t k = 0; k < pdf.cols; ++k) {
      if (p[k] < 0.0) throw DomainError("cdf_from_pdf: negative mass");
      run += p[k];
      c[k + 1] = run;
    }
    if (run <= 0.0)
      throw DomainError("cdf_from_pdf: row " + std::to_string(i) +
                        " has zero mass");
    const double inv = 1.0 / run;
    for (std::size_t k = 1; k < pdf.cols; ++k) c[k] *= inv;
    c[pdf.cols] = 1.0;
  }
  return cdf;
}

DenseMatrix cdf_eval(const DenseMatrix& cdf, const DenseMatrix& queries) {
  DenseMatrix y;
  std::vector<std::size_t> seg;
  kernels::interp_eval_rows(cdf, queries, y, seg);
  return y;
}

DenseMatrix cdf_inverse(const DenseMatrix& cdf, const DenseMatrix& probs) {
  DenseMatrix t;
  std::vector<std::size_t> seg;
  kernels::interp_inverse_rows(cdf, probs, t, seg);
  return t;
}

double wasserstein_1d_exact(const std::vector<double>& x,
                            const std::vector<double>& y, double p) {
  if (x.size() != y.size() || x.empty())
    throw ShapeError("wasserstein_1d: need equal nonempty samples");
  if (p < 1.0) throw DomainError("wasserstein_1d: p must be >= 1");
  std::vector<double> xs = x, ys = y;
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = std::abs(xs[i] - ys[i]);
    acc += p == 1.0 ? d : (p == 2.0 ? d * d : std::pow(d, p));
  }
  acc /= static_cast<double>(xs.size());
  return p == 1.0 ? acc : (p == 2.0 ? std::sqrt(acc) : std::pow(acc, 1.0 / p));
}

NodeId append_transport_block(Tape& t, NodeId y, NodeId z, NodeId o,
                              std::size_t bins, double alpha,
                              GradMode rescale_grad) {
  const TapeNode& ny = t.node(y);
  const TapeNode& nz = t.node(z);
  const TapeNode& no = t.node(o);
  const std::size_t r = ny.rows, b = ny.cols;
  if (nz.rows != r || nz.cols != b)
    throw ShapeError("transport block: y and z shapes differ");
  if (no.rows != r || no.cols != r)
    throw ShapeError("transport block: o must be r x r");
  if (bins < 2) throw DomainError("transport block: need at least 2 bins");
  if (!(alpha > 0.0)) throw DomainError("transport block: alpha must be > 0");

  const std::size_t l = bins;
  const std::size_t rb = r * b;

  // Shared constants.
  DenseMatrix centers(1, l);
  for (std::size_t k = 0; k < l; ++k)
    centers(0, k) = (static_cast<double>(k) + 0.5) / static_cast<double>(l);
  const NodeId c_row = t.constant(std::move(centers));

  DenseMatrix rowsum(l, l);  // upper-triangular ones: cumulative sums
  for (std::size_t k = 0; k < l; ++k)
    for (std::size_t k2 = k; k2 < l; ++k2) rowsum(k, k2) = 1.0;
  const NodeId cum = t.constant(std::move(rowsum));

  DenseMatrix pad(l, l + 1);  // shifts columns right, zeros column 0
  for (std::size_t k = 0; k < l; ++k) pad(k, k + 1) = 1.0;
  const NodeId zero_pad = t.constant(std::move(pad));

  DenseMatrix sel(r, rb);  // per-row sums over the flattened (row, sample) axis
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < b; ++j) sel(i, i * b + j) = 1.0;
  const NodeId row_sel = t.constant(std::move(sel));

  // Rotate into the projection frame.
  const NodeId yp = t.matmul(o, y, true, false);
  const NodeId zp = t.matmul(o, z, true, false);

  auto rescaled = [&](NodeId v) {
    const NodeId lo = t.min_rows(v, rescale_grad);
    const NodeId hi = t.max_rows(v, rescale_grad);
    const NodeId range = t.sub(hi, lo);
    const NodeId inv = t.recip(range, kDegenerate);
    const NodeId centered = t.sub(v, t.broadcast_col(lo, b));
    struct Scaled {
      NodeId unit, lo, range;
    };
    return Scaled{t.mul(centered, t.broadcast_col(inv, b)), lo, range};
  };
  const auto ys = rescaled(yp);
  const auto zs = rescaled(zp);

  // Soft histogram -> CDF at the bin edges, per projection row.
  auto soft_cdf = [&](NodeId unit) {
    const NodeId col = t.reshape(unit, rb, 1);
    const NodeId diff = t.sub(t.broadcast_col(col, l),
                              t.broadcast_row(c_row, rb));
    const NodeId w = t.softmax_rows(t.scalar_mul(t.square(diff), -alpha));
    const NodeId pdf = t.scalar_mul(t.matmul(row_sel, w),
                                    1.0 / static_cast<double>(b));
    return t.matmul(t.matmul(pdf, cum), zero_pad);  // r x (l+1), leading zero
  };
  const NodeId cdf_y = soft_cdf(ys.unit);
  const NodeId cdf_z = soft_cdf(zs.unit);

  // Increasing rearrangement in [0,1], then undo z's rescale and rotate back.
  const NodeId probs = t.interp_eval(cdf_y, ys.unit);
  const NodeId mapped = t.interp_inverse(cdf_z, probs);
  const NodeId restored = t.add(t.mul(mapped, t.broadcast_col(zs.range, b)),
                                t.broadcast_col(zs.lo, b));
  return t.matmul(o, restored, false, false);
}

DenseMatrix primal_block_forward(const DenseMatrix& y, const DenseMatrix& z,
                                 const DenseMatrix& o, std::size_t bins,
                                 double alpha, GradMode rescale_grad) {
  require_finite(y, "primal block y");
  require_finite(z, "primal block z");
  require_finite(o, "primal block rotation");
  if (orthogonality_drift(o) > 1e-8)
    throw DomainError("primal block: rotation is not orthogonal");
  Tape t;
  const NodeId ly = t.leaf(y.rows, y.cols, "y");
  const NodeId lz = t.leaf(z.rows, z.cols, "z");
  const NodeId lo = t.leaf(o.rows, o.cols, "o");
  const NodeId out = append_transport_block(t, ly, lz, lo, bins, alpha,
                                            rescale_grad);
  EvalContext ctx;
  ctx.set_leaf(t, ly, y);
  ctx.set_leaf(t, lz, z);
  ctx.set_leaf(t, lo, o);
  forward(t, ctx);
  return ctx.value(out);
}

DenseMatrix idt_transfer(const DenseMatrix& src, const DenseMatrix& dst,
                         std::size_t iters, RngStream& rng) {
  if (src.rows != dst.rows || src.cols != dst.cols)
    throw ShapeError("idt_transfer: batch shapes differ");
  if (src.rows == 0 || src.cols == 0)
    throw ShapeError("idt_transfer: empty batch");
  require_finite(src, "idt source");
  require_finite(dst, "idt target");
  DenseMatrix cur = src;
  DenseMatrix yp, zp, moved;
  for (std::size_t it = 0; it < iters; ++it) {
    const DenseMatrix o = random_orthogonal(rng, src.rows);
    kernels::gemm(o, true, cur, false, yp);
    kernels::gemm(o, true, dst, false, zp);
    kernels::sort_transport_rows(yp, zp, moved);
    kernels::gemm(o, false, moved, false, cur);
  }
  return cur;
}

McSwdResult mc_swd(const DenseMatrix& x, const DenseMatrix& y,
                   std::size_t directions, double p, RngStream& rng) {
  if (x.rows != y.rows) throw ShapeError("mc_swd: dimension mismatch");
  if (x.cols != y.cols)
    throw ShapeError("mc_swd: equal batch sizes required");
  if (x.cols == 0) throw ShapeError("mc_swd: empty batch");
  if (directions == 0) throw DomainError("mc_swd: need at least 1 direction");
  if (p < 1.0) throw DomainError("mc_swd: p must be >= 1");
  require_finite(x, "mc_swd x");
  require_finite(y, "mc_swd y");

  const std::size_t d = x.rows, b = x.cols;
  std::vector<double> theta(d), px(b), py(b);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t k = 0; k < directions; ++k) {
    double nrm = 0.0;
    do {
      nrm = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        theta[i] = rng.gaussian();
        nrm += theta[i] * theta[i];
      }
      nrm = std::sqrt(nrm);
    } while (nrm < 1e-12);
    for (std::size_t i = 0; i < d; ++i) theta[i] /= nrm;
    for (std::size_t j = 0; j < b; ++j) {
      double sx = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        sx += theta[i] * x(i, j);
        sy += theta[i] * y(i, j);
      }
      px[j] = sx;
      py[j] = sy;
    }
    std::sort(px.begin(), px.end());
    std::sort(py.begin(), py.end());
    double w = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      const double dd = std::abs(px[j] - py[j]);
      w += p == 1.0 ? dd : (p == 2.0 ? dd * dd : std::pow(dd, p));
    }
    w /= static_cast<double>(b);  // W_p^p along this direction
    sum += w;
    sumsq += w * w;
  }
  const double n = static_cast<double>(directions);
  const double mean = sum / n;  // estimate of E W_p^p
  double se_mean = 0.0;
  if (directions > 1) {
    const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
    se_mean = std::sqrt(var / n);
  }
  McSwdResult out;
  if (p == 1.0) {
    out.value = mean;
    out.std_error = se_mean;
  } else {
    out.value = std::pow(mean, 1.0 / p);
    // Delta method through mean^(1/p).
    out.std_error = mean > 0.0
                        ? se_mean / p * std::pow(mean, 1.0 / p - 1.0)
                        : se_mean;
  }
  return out;
}

double dkw_min_eps(std::size_t b) {
  if (b == 0) throw DomainError("dkw: empty sample");
  return std::sqrt(std::log(2.0) / (2.0 * static_cast<double>(b)));
}

DkwReport dkw_check(std::size_t b, double eps, std::size_t trials,
                    RngStream& rng) {
  if (b == 0) throw DomainError("dkw_check: empty sample");
  if (trials < 1000)
    throw PreconditionError("dkw_check: need at least 1000 trials");
  if (eps < dkw_min_eps(b))
    throw PreconditionError(
        "dkw_check: eps " + std::to_string(eps) + " below validity floor " +
        std::to_string(dkw_min_eps(b)) + " for b = " + std::to_string(b));

  std::vector<double> u(b);
  std::size_t exceed = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    for (auto& v : u) v = rng.uniform01();
    std::sort(u.begin(), u.end());
    double stat = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const double diff =
          static_cast<double>(i + 1) / static_cast<double>(b) - u[i];
      stat = std::max(stat, diff);
    }
    if (stat > eps) ++exceed;
  }
  DkwReport rep;
  rep.frequency = static_cast<double>(exceed) / static_cast<double>(trials);
  rep.bound = std::exp(-2.0 * static_cast<double>(b) * eps * eps);
  rep.std_error = std::sqrt(
      std::max(0.0, rep.frequency * (1.0 - rep.frequency)) /
      static_cast<double>(trials));
  rep.within = rep.frequency <= rep.bound + 3.0 * rep.std_error + 1e-12;
  return rep;
}

}  // namespace swd
