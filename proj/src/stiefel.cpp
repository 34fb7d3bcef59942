#include "swd/stiefel.hpp"

#include <cmath>

#include "swd/errors.hpp"
#include "swd/kernels.hpp"
#include "swd/linalg.hpp"

namespace swd {

void adam_step(AdamState& state, DenseMatrix& param, const DenseMatrix& grad,
               const AdamConfig& cfg) {
  if (!param.same_shape(grad)) throw ShapeError("adam: grad shape mismatch");
  require_finite(grad, "adam gradient");
  if (!state.m.same_shape(param)) {
    state.m.resize(param.rows, param.cols);
    state.v.resize(param.rows, param.cols);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.a[i];
    state.m.a[i] = cfg.beta1 * state.m.a[i] + (1.0 - cfg.beta1) * g;
    state.v.a[i] = cfg.beta2 * state.v.a[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m.a[i] / c1;
    const double vhat = state.v.a[i] / c2;
    param.a[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

DenseMatrix stiefel_tangent(const DenseMatrix& o, const DenseMatrix& grad,
                            TangentKind kind) {
  if (!o.same_shape(grad)) throw ShapeError("stiefel: grad shape mismatch");
  DenseMatrix xi(o.rows, o.cols);
  if (kind == TangentKind::kHalfDiff) {
    // (G - O G^T O) / 2
    DenseMatrix gto, ogto;
    kernels::gemm(grad, true, o, false, gto);   // G^T O
    kernels::gemm(o, false, gto, false, ogto);  // O G^T O
    for (std::size_t i = 0; i < xi.size(); ++i)
      xi.a[i] = 0.5 * (grad.a[i] - ogto.a[i]);
  } else {
    // G - O (O^T G + G^T O) / 2
    DenseMatrix otg, sym, corr;
    kernels::gemm(o, true, grad, false, otg);  // O^T G
    sym.resize(otg.rows, otg.cols);
    for (std::size_t i = 0; i < otg.rows; ++i)
      for (std::size_t j = 0; j < otg.cols; ++j)
        sym(i, j) = 0.5 * (otg(i, j) + otg(j, i));
    kernels::gemm(o, false, sym, false, corr);
    for (std::size_t i = 0; i < xi.size(); ++i)
      xi.a[i] = grad.a[i] - corr.a[i];
  }
  return xi;
}

DenseMatrix qr_retract(const DenseMatrix& m) { return qr_orthonormalize(m); }

void stiefel_adam_step(StiefelAdamState& state, DenseMatrix& o,
                       const DenseMatrix& grad, const AdamConfig& cfg,
                       TangentKind kind) {
  const DenseMatrix xi = stiefel_tangent(o, grad, kind);
  // Reuse the Euclidean Adam on a scratch copy to get the scaled step, then
  // retract the moved point instead of keeping the ambient result.
  DenseMatrix moved = o;
  adam_step(state.moments, moved, xi, cfg);
  o = qr_retract(moved);
  if (orthogonality_drift(o) > 1e-8) o = qr_retract(o);
}

}  // namespace swd
