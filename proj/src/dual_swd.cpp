#include "swd/dual_swd.hpp"

#include "swd/errors.hpp"

namespace swd {

DualHeads append_dual_heads(Tape& t, NodeId yp, NodeId u, NodeId w, NodeId v,
                            double slope) {
  const TapeNode& np = t.node(yp);
  const std::size_t r = np.rows, b = np.cols;
  for (NodeId param : {u, w, v}) {
    const TapeNode& n = t.node(param);
    if (n.rows != r || n.cols != 1)
      throw ShapeError("dual heads: parameters must be r x 1");
  }
  const NodeId pre = t.add(t.mul(t.broadcast_col(w, b), yp),
                           t.broadcast_col(v, b));
  DualHeads out;
  out.values = t.mul(t.broadcast_col(u, b), t.leaky_relu(pre, slope));
  out.derivs = t.mul(t.broadcast_col(t.mul(u, w), b),
                     t.act_grad_leaky(pre, slope));
  return out;
}

DenseMatrix dual_block_forward(const DenseMatrix& yp,
                               const std::vector<double>& u,
                               const std::vector<double>& w,
                               const std::vector<double>& v, double slope) {
  const std::size_t r = yp.rows, b = yp.cols;
  if (u.size() != r || w.size() != r || v.size() != r)
    throw ShapeError("dual block: parameter length must equal row count");
  require_finite(yp, "dual block input");
  DenseMatrix out(b, r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* ti = yp.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      const double pre = w[i] * ti[j] + v[i];
      out(j, i) = u[i] * (pre > 0.0 ? pre : slope * pre);
    }
  }
  return out;
}

}  // namespace swd
