#pragma once

#include <cstddef>
#include <vector>

#include "swd/matrix.hpp"
#include "swd/tape.hpp"

namespace swd {

// Per-projection scalar heads for the dual transport critic: coordinate i of
// a projected sample passes through its own one-knee ramp
//   F_i(t) = u_i * leaky_relu(w_i * t + v_i, slope).
// The analytic derivative dF_i/dt is built alongside so derivative penalties
// stay first-order tape expressions.

struct DualHeads {
  NodeId values = kNoNode;  // r x b: F_i applied to row i
  NodeId derivs = kNoNode;  // r x b: dF_i/dt at the same points
};

// yp: r x b node of projected coordinates; u, w, v: r x 1 parameter nodes.
DualHeads append_dual_heads(Tape& t, NodeId yp, NodeId u, NodeId w, NodeId v,
                            double slope = 0.2);

// One-shot evaluation on plain matrices; samples come back as rows (b x r),
// one column per head.
DenseMatrix dual_block_forward(const DenseMatrix& yp,
                               const std::vector<double>& u,
                               const std::vector<double>& w,
                               const std::vector<double>& v,
                               double slope = 0.2);

}  // namespace swd
