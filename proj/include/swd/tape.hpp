#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swd/matrix.hpp"

namespace swd {

// Reverse-mode autodiff over a static graph of dense-matrix ops.
//
// A Tape is a frozen, append-only node list built once per model; shapes are
// fixed at build time so every shape error surfaces during construction.
// Per-evaluation state (values, adjoints, recorded indices) lives in an
// EvalContext, so one tape can be evaluated concurrently or repeatedly
// without rebuilding.
//
// Gradients follow left-limit conventions at kinks: leaky_relu'(0) = slope,
// a piecewise-linear query sitting exactly on an interior knot uses the
// segment ending there.

enum class Op : std::uint8_t {
  kConstant,
  kLeaf,
  kMatMul,         // flag_a / flag_b transpose the operands
  kAdd,
  kSub,
  kMul,            // elementwise
  kScalarMul,      // scalar = factor
  kRecip,          // scalar = guard; |x| <= guard maps to 0
  kLeakyRelu,      // scalar = negative-side slope
  kElu,
  kTanh,
  kSquare,
  kSqrt,           // x <= 0 maps to 0
  kSum,            // all entries -> 1x1
  kMean,           // all entries -> 1x1
  kBroadcast,      // kind: 0 = 1x1 -> rxc, 1 = 1xc -> rxc, 2 = rx1 -> rxc
  kReshape,
  kGatherRows,     // static row index list
  kScatterRows,    // adds rows into a taller zero matrix
  kL2NormRows,     // rxc -> rx1 euclidean row norms
  kMinReduceRows,  // rxc -> rx1; flag_a set = stop-gradient
  kMaxReduceRows,
  kSoftmaxRows,
  kInterpEval,     // piecewise-linear curve per row, uniform knots on [0,1]
  kInterpInverse,
  kActGradLeaky,   // elementwise leaky_relu'(x); scalar = slope
  kActGradElu,     // elementwise elu'(x)
};

const char* op_name(Op op);

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

enum class GradMode : std::uint8_t { kFlow, kStop };

struct TapeNode {
  Op op = Op::kConstant;
  bool flag_a = false;
  bool flag_b = false;
  std::uint8_t kind = 0;
  double scalar = 0.0;
  NodeId in0 = kNoNode;
  NodeId in1 = kNoNode;
  std::size_t rows = 0;
  std::size_t cols = 0;
  DenseMatrix constant;               // kConstant payload
  std::vector<std::size_t> indices;   // gather / scatter rows
  std::string label;                  // leaves only, for error messages
};

class Tape {
 public:
  NodeId constant(DenseMatrix value, std::string label = "");
  NodeId leaf(std::size_t rows, std::size_t cols, std::string label = "");

  NodeId matmul(NodeId a, NodeId b, bool ta = false, bool tb = false);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scalar_mul(NodeId a, double factor);
  NodeId recip(NodeId a, double guard);
  NodeId leaky_relu(NodeId a, double slope);
  NodeId elu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId broadcast_scalar(NodeId a, std::size_t rows, std::size_t cols);
  NodeId broadcast_row(NodeId a, std::size_t rows);
  NodeId broadcast_col(NodeId a, std::size_t cols);
  NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);
  NodeId gather_rows(NodeId a, std::vector<std::size_t> idx);
  NodeId scatter_rows(NodeId a, std::vector<std::size_t> idx,
                      std::size_t out_rows);
  NodeId l2norm_rows(NodeId a);
  NodeId min_rows(NodeId a, GradMode mode = GradMode::kFlow);
  NodeId max_rows(NodeId a, GradMode mode = GradMode::kFlow);
  NodeId softmax_rows(NodeId a);
  // values: r x (K+1) knot values, queries r x n in [0,1].
  NodeId interp_eval(NodeId values, NodeId queries);
  // values nondecreasing per row; probes r x n; result positions in [0,1].
  NodeId interp_inverse(NodeId values, NodeId probes);
  NodeId act_grad_leaky(NodeId a, double slope);
  NodeId act_grad_elu(NodeId a);

  const TapeNode& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct GradTapeBuilder;
  NodeId push(TapeNode n);
  const TapeNode& in(NodeId id) const;
  std::vector<TapeNode> nodes_;
};

class EvalContext {
 public:
  void set_leaf(const Tape& tape, NodeId id, const DenseMatrix& value);
  bool has_value(NodeId id) const {
    return id < vals_.size() && vals_[id].size() > 0;
  }
  const DenseMatrix& value(NodeId id) const { return vals_.at(id); }
  const DenseMatrix& grad(NodeId id) const { return grads_.at(id); }

 private:
  friend void forward(const Tape&, EvalContext&);
  friend void backward(const Tape&, EvalContext&, NodeId);
  std::vector<DenseMatrix> vals_;
  std::vector<DenseMatrix> grads_;
  std::vector<char> leaf_set_;
  std::vector<std::vector<std::size_t>> aux_;  // argmin/argmax, interp segments
};

// Evaluates every node in order. Throws DomainError if a leaf was never set.
void forward(const Tape& tape, EvalContext& ctx);

// Reverse sweep from a scalar (1x1) root; adjoints land in ctx.grad(id).
// Requires a preceding forward on the same context.
void backward(const Tape& tape, EvalContext& ctx, NodeId root);

// Compares backward() against central differences at the leaf values already
// set in ctx. Returns max over all leaf entries of
//   |analytic - numeric| / (|numeric| + 1e-8).
// h must lie in [1e-8, 1e-4] (PreconditionError otherwise).
double finite_diff_check(const Tape& tape, EvalContext& ctx, NodeId root,
                         const std::vector<NodeId>& leaves, double h = 1e-4);

// Copy of `src` extended with nodes that compute d(root)/d(leaf) for each
// requested leaf. Node ids of `src` stay valid in the copy. An op on the
// path whose adjoint has no closed-form node expansion (interp_eval,
// interp_inverse, min/max reductions in flow mode) throws
// UnsupportedSecondOrder naming the op.
struct GradTape {
  Tape tape;
  std::vector<NodeId> grads;  // one per requested leaf, in order
};
GradTape grad_as_tape(const Tape& src, NodeId root,
                      const std::vector<NodeId>& leaves);

// In-place variant: appends the adjoint nodes to `t` itself and returns the
// gradient node per requested leaf. Lets a training tape differentiate
// through its own gradient (penalty terms on d(root)/d(input)).
std::vector<NodeId> append_grad_nodes(Tape& t, NodeId root,
                                      const std::vector<NodeId>& leaves);

// Hessian-vector product d/d(wrt) [ d(root)/d(wrt) . v ] evaluated at the
// leaf values in `ctx`, via backward over the grad_as_tape extension.
DenseMatrix hessian_vector_product(const Tape& tape, const EvalContext& ctx,
                                   NodeId root, NodeId wrt,
                                   const DenseMatrix& v);

}  // namespace swd
