#pragma once

#include <cstddef>

#include "swd/matrix.hpp"

namespace swd {

// Adam with bias correction. Moment shapes follow the parameter.
struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  DenseMatrix m;
  DenseMatrix v;
  std::size_t step = 0;
};

void adam_step(AdamState& state, DenseMatrix& param, const DenseMatrix& grad,
               const AdamConfig& cfg);

// Update direction for an orthogonal parameter: ambient Adam moments on the
// tangent-projected gradient, then a QR retraction back onto the manifold.
enum class TangentKind {
  kHalfDiff,      // (G - O G^T O) / 2
  kSymCorrected,  // G - O (O^T G + G^T O) / 2
};

// Projects an ambient gradient onto the tangent space at o (O^T xi is skew).
DenseMatrix stiefel_tangent(const DenseMatrix& o, const DenseMatrix& grad,
                            TangentKind kind);

// Nearest-ish orthonormal-column matrix via sign-corrected QR.
DenseMatrix qr_retract(const DenseMatrix& m);

struct StiefelAdamState {
  AdamState moments;
};

// One descent step on the manifold; re-retracts if the result drifts beyond
// 1e-8 from orthogonality (defensive; QR already lands within roundoff).
void stiefel_adam_step(StiefelAdamState& state, DenseMatrix& o,
                       const DenseMatrix& grad, const AdamConfig& cfg,
                       TangentKind kind = TangentKind::kHalfDiff);

}  // namespace swd
