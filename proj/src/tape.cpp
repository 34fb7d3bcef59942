#include "swd/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swd/errors.hpp"
#include "swd/kernels.hpp"

namespace swd {

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kRecip: return "recip";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kElu: return "elu";
    case Op::kTanh: return "tanh";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kBroadcast: return "broadcast";
    case Op::kReshape: return "reshape";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterRows: return "scatter_rows";
    case Op::kL2NormRows: return "l2norm_rows";
    case Op::kMinReduceRows: return "min_reduce_rows";
    case Op::kMaxReduceRows: return "max_reduce_rows";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kInterpEval: return "interp_eval";
    case Op::kInterpInverse: return "interp_inverse";
    case Op::kActGradLeaky: return "act_grad_leaky";
    case Op::kActGradElu: return "act_grad_elu";
  }
  return "?";
}

NodeId Tape::push(TapeNode n) {
  if (nodes_.size() >= kNoNode) throw TooLarge("tape: node limit reached");
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const TapeNode& Tape::in(NodeId id) const {
  if (id >= nodes_.size()) throw DomainError("tape: input id out of range");
  return nodes_[id];
}

NodeId Tape::constant(DenseMatrix value, std::string label) {
  if (value.rows == 0 || value.cols == 0)
    throw ShapeError("tape: empty constant");
  TapeNode n;
  n.op = Op::kConstant;
  n.rows = value.rows;
  n.cols = value.cols;
  n.constant = std::move(value);
  n.label = std::move(label);
  return push(std::move(n));
}

NodeId Tape::leaf(std::size_t rows, std::size_t cols, std::string label) {
  if (rows == 0 || cols == 0) throw ShapeError("tape: empty leaf");
  TapeNode n;
  n.op = Op::kLeaf;
  n.rows = rows;
  n.cols = cols;
  n.label = std::move(label);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b, bool ta, bool tb) {
  const TapeNode& na = in(a);
  const TapeNode& nb = in(b);
  const std::size_t m = ta ? na.cols : na.rows;
  const std::size_t k = ta ? na.rows : na.cols;
  const std::size_t kb = tb ? nb.cols : nb.rows;
  const std::size_t nn = tb ? nb.rows : nb.cols;
  if (k != kb)
    throw ShapeError("tape matmul: inner dims " + std::to_string(k) + " vs " +
                     std::to_string(kb));
  TapeNode n;
  n.op = Op::kMatMul;
  n.flag_a = ta;
  n.flag_b = tb;
  n.in0 = a;
  n.in1 = b;
  n.rows = m;
  n.cols = nn;
  return push(std::move(n));
}

namespace {

TapeNode binary_same_shape(Op op, const TapeNode& na, const TapeNode& nb,
                           NodeId a, NodeId b) {
  if (na.rows != nb.rows || na.cols != nb.cols)
    throw ShapeError(std::string("tape ") + op_name(op) + ": shape mismatch");
  TapeNode n;
  n.op = op;
  n.in0 = a;
  n.in1 = b;
  n.rows = na.rows;
  n.cols = na.cols;
  return n;
}

TapeNode unary_same_shape(Op op, const TapeNode& na, NodeId a) {
  TapeNode n;
  n.op = op;
  n.in0 = a;
  n.rows = na.rows;
  n.cols = na.cols;
  return n;
}

TapeNode rowreduce(Op op, const TapeNode& na, NodeId a) {
  TapeNode n;
  n.op = op;
  n.in0 = a;
  n.rows = na.rows;
  n.cols = 1;
  return n;
}

}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  return push(binary_same_shape(Op::kAdd, in(a), in(b), a, b));
}
NodeId Tape::sub(NodeId a, NodeId b) {
  return push(binary_same_shape(Op::kSub, in(a), in(b), a, b));
}
NodeId Tape::mul(NodeId a, NodeId b) {
  return push(binary_same_shape(Op::kMul, in(a), in(b), a, b));
}

NodeId Tape::scalar_mul(NodeId a, double factor) {
  TapeNode n = unary_same_shape(Op::kScalarMul, in(a), a);
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Tape::recip(NodeId a, double guard) {
  if (guard < 0.0) throw DomainError("tape recip: negative guard");
  TapeNode n = unary_same_shape(Op::kRecip, in(a), a);
  n.scalar = guard;
  return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId a, double slope) {
  TapeNode n = unary_same_shape(Op::kLeakyRelu, in(a), a);
  n.scalar = slope;
  return push(std::move(n));
}

NodeId Tape::elu(NodeId a) { return push(unary_same_shape(Op::kElu, in(a), a)); }
NodeId Tape::tanh(NodeId a) { return push(unary_same_shape(Op::kTanh, in(a), a)); }
NodeId Tape::square(NodeId a) {
  return push(unary_same_shape(Op::kSquare, in(a), a));
}
NodeId Tape::sqrt(NodeId a) {
  return push(unary_same_shape(Op::kSqrt, in(a), a));
}

NodeId Tape::sum(NodeId a) {
  TapeNode n;
  n.op = Op::kSum;
  n.in0 = a;
  in(a);
  n.rows = n.cols = 1;
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  TapeNode n;
  n.op = Op::kMean;
  n.in0 = a;
  in(a);
  n.rows = n.cols = 1;
  return push(std::move(n));
}

NodeId Tape::broadcast_scalar(NodeId a, std::size_t rows, std::size_t cols) {
  const TapeNode& na = in(a);
  if (na.rows != 1 || na.cols != 1)
    throw ShapeError("tape broadcast_scalar: input not 1x1");
  if (rows == 0 || cols == 0) throw ShapeError("tape broadcast: empty target");
  TapeNode n;
  n.op = Op::kBroadcast;
  n.kind = 0;
  n.in0 = a;
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::broadcast_row(NodeId a, std::size_t rows) {
  const TapeNode& na = in(a);
  if (na.rows != 1) throw ShapeError("tape broadcast_row: input not 1xc");
  if (rows == 0) throw ShapeError("tape broadcast: empty target");
  TapeNode n;
  n.op = Op::kBroadcast;
  n.kind = 1;
  n.in0 = a;
  n.rows = rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Tape::broadcast_col(NodeId a, std::size_t cols) {
  const TapeNode& na = in(a);
  if (na.cols != 1) throw ShapeError("tape broadcast_col: input not rx1");
  if (cols == 0) throw ShapeError("tape broadcast: empty target");
  TapeNode n;
  n.op = Op::kBroadcast;
  n.kind = 2;
  n.in0 = a;
  n.rows = na.rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::size_t rows, std::size_t cols) {
  const TapeNode& na = in(a);
  if (na.rows * na.cols != rows * cols)
    throw ShapeError("tape reshape: element count changes");
  TapeNode n;
  n.op = Op::kReshape;
  n.in0 = a;
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, std::vector<std::size_t> idx) {
  const TapeNode& na = in(a);
  if (idx.empty()) throw ShapeError("tape gather_rows: empty index list");
  for (std::size_t r : idx)
    if (r >= na.rows) throw ShapeError("tape gather_rows: index out of range");
  TapeNode n;
  n.op = Op::kGatherRows;
  n.in0 = a;
  n.rows = idx.size();
  n.cols = na.cols;
  n.indices = std::move(idx);
  return push(std::move(n));
}

NodeId Tape::scatter_rows(NodeId a, std::vector<std::size_t> idx,
                          std::size_t out_rows) {
  const TapeNode& na = in(a);
  if (idx.size() != na.rows)
    throw ShapeError("tape scatter_rows: one index per input row required");
  for (std::size_t r : idx)
    if (r >= out_rows) throw ShapeError("tape scatter_rows: index out of range");
  TapeNode n;
  n.op = Op::kScatterRows;
  n.in0 = a;
  n.rows = out_rows;
  n.cols = na.cols;
  n.indices = std::move(idx);
  return push(std::move(n));
}

NodeId Tape::l2norm_rows(NodeId a) {
  return push(rowreduce(Op::kL2NormRows, in(a), a));
}

NodeId Tape::min_rows(NodeId a, GradMode mode) {
  TapeNode n = rowreduce(Op::kMinReduceRows, in(a), a);
  n.flag_a = (mode == GradMode::kStop);
  return push(std::move(n));
}

NodeId Tape::max_rows(NodeId a, GradMode mode) {
  TapeNode n = rowreduce(Op::kMaxReduceRows, in(a), a);
  n.flag_a = (mode == GradMode::kStop);
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
  return push(unary_same_shape(Op::kSoftmaxRows, in(a), a));
}

namespace {

TapeNode interp_node(Op op, const TapeNode& nv, const TapeNode& nq, NodeId v,
                     NodeId q) {
  if (nv.rows != nq.rows)
    throw ShapeError(std::string("tape ") + op_name(op) +
                     ": values and queries need equal row counts");
  if (nv.cols < 2)
    throw ShapeError(std::string("tape ") + op_name(op) + ": need >= 2 knots");
  TapeNode n;
  n.op = op;
  n.in0 = v;
  n.in1 = q;
  n.rows = nq.rows;
  n.cols = nq.cols;
  return n;
}

}  // namespace

NodeId Tape::interp_eval(NodeId values, NodeId queries) {
  return push(interp_node(Op::kInterpEval, in(values), in(queries), values,
                          queries));
}

NodeId Tape::interp_inverse(NodeId values, NodeId probes) {
  return push(interp_node(Op::kInterpInverse, in(values), in(probes), values,
                          probes));
}

NodeId Tape::act_grad_leaky(NodeId a, double slope) {
  TapeNode n = unary_same_shape(Op::kActGradLeaky, in(a), a);
  n.scalar = slope;
  return push(std::move(n));
}

NodeId Tape::act_grad_elu(NodeId a) {
  return push(unary_same_shape(Op::kActGradElu, in(a), a));
}

// ---------------------------------------------------------------------------
// Evaluation

void EvalContext::set_leaf(const Tape& tape, NodeId id, const DenseMatrix& value) {
  if (id >= tape.size()) throw DomainError("set_leaf: id out of range");
  const TapeNode& n = tape.node(id);
  if (n.op != Op::kLeaf) throw DomainError("set_leaf: node is not a leaf");
  if (value.rows != n.rows || value.cols != n.cols)
    throw ShapeError("set_leaf '" + n.label + "': expected " +
                     std::to_string(n.rows) + "x" + std::to_string(n.cols) +
                     ", got " + std::to_string(value.rows) + "x" +
                     std::to_string(value.cols));
  if (vals_.size() < tape.size()) {
    vals_.resize(tape.size());
    grads_.resize(tape.size());
    leaf_set_.resize(tape.size(), 0);
    aux_.resize(tape.size());
  }
  vals_[id] = value;
  leaf_set_[id] = 1;
}

void forward(const Tape& tape, EvalContext& ctx) {
  const std::size_t n = tape.size();
  if (ctx.vals_.size() < n) {
    ctx.vals_.resize(n);
    ctx.grads_.resize(n);
    ctx.leaf_set_.resize(n, 0);
    ctx.aux_.resize(n);
  }
  for (NodeId id = 0; id < n; ++id) {
    const TapeNode& nd = tape.node(id);
    DenseMatrix& out = ctx.vals_[id];
    switch (nd.op) {
      case Op::kConstant:
        out = nd.constant;
        break;
      case Op::kLeaf:
        if (!ctx.leaf_set_[id])
          throw DomainError("forward: leaf '" + nd.label + "' has no value");
        break;
      case Op::kMatMul:
        kernels::gemm(ctx.vals_[nd.in0], nd.flag_a, ctx.vals_[nd.in1],
                      nd.flag_b, out);
        break;
      case Op::kAdd: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        const DenseMatrix& b = ctx.vals_[nd.in1];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] = a.a[i] + b.a[i];
        break;
      }
      case Op::kSub: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        const DenseMatrix& b = ctx.vals_[nd.in1];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] = a.a[i] - b.a[i];
        break;
      }
      case Op::kMul: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        const DenseMatrix& b = ctx.vals_[nd.in1];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] = a.a[i] * b.a[i];
        break;
      }
      case Op::kScalarMul: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = nd.scalar * a.a[i];
        break;
      }
      case Op::kRecip: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = std::abs(a.a[i]) <= nd.scalar ? 0.0 : 1.0 / a.a[i];
        break;
      }
      case Op::kLeakyRelu: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = a.a[i] > 0.0 ? a.a[i] : nd.scalar * a.a[i];
        break;
      }
      case Op::kElu: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = a.a[i] > 0.0 ? a.a[i] : std::expm1(a.a[i]);
        break;
      }
      case Op::kTanh: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = std::tanh(a.a[i]);
        break;
      }
      case Op::kSquare: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i) out.a[i] = a.a[i] * a.a[i];
        break;
      }
      case Op::kSqrt: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = a.a[i] > 0.0 ? std::sqrt(a.a[i]) : 0.0;
        break;
      }
      case Op::kSum: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        double s = 0.0;
        for (const double x : a.a) s += x;
        out.resize(1, 1);
        out(0, 0) = s;
        break;
      }
      case Op::kMean: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        double s = 0.0;
        for (const double x : a.a) s += x;
        out.resize(1, 1);
        out(0, 0) = s / static_cast<double>(a.size());
        break;
      }
      case Op::kBroadcast: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        if (nd.kind == 0) {
          std::fill(out.a.begin(), out.a.end(), a(0, 0));
        } else if (nd.kind == 1) {
          for (std::size_t i = 0; i < nd.rows; ++i)
            std::copy(a.row(0), a.row(0) + nd.cols, out.row(i));
        } else {
          for (std::size_t i = 0; i < nd.rows; ++i)
            std::fill(out.row(i), out.row(i) + nd.cols, a(i, 0));
        }
        break;
      }
      case Op::kReshape: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.rows = nd.rows;
        out.cols = nd.cols;
        out.a = a.a;
        break;
      }
      case Op::kGatherRows: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < nd.indices.size(); ++i)
          std::copy(a.row(nd.indices[i]), a.row(nd.indices[i]) + nd.cols,
                    out.row(i));
        break;
      }
      case Op::kScatterRows: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        std::fill(out.a.begin(), out.a.end(), 0.0);
        for (std::size_t i = 0; i < nd.indices.size(); ++i) {
          double* dst = out.row(nd.indices[i]);
          const double* src = a.row(i);
          for (std::size_t j = 0; j < nd.cols; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::kL2NormRows: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, 1);
        for (std::size_t i = 0; i < a.rows; ++i) {
          double s = 0.0;
          const double* ai = a.row(i);
          for (std::size_t j = 0; j < a.cols; ++j) s += ai[j] * ai[j];
          out(i, 0) = std::sqrt(s);
        }
        break;
      }
      case Op::kMinReduceRows:
        kernels::row_min(ctx.vals_[nd.in0], out, ctx.aux_[id]);
        break;
      case Op::kMaxReduceRows:
        kernels::row_max(ctx.vals_[nd.in0], out, ctx.aux_[id]);
        break;
      case Op::kSoftmaxRows:
        kernels::softmax_rows(ctx.vals_[nd.in0], out);
        break;
      case Op::kInterpEval:
        kernels::interp_eval_rows(ctx.vals_[nd.in0], ctx.vals_[nd.in1], out,
                                  ctx.aux_[id]);
        break;
      case Op::kInterpInverse:
        kernels::interp_inverse_rows(ctx.vals_[nd.in0], ctx.vals_[nd.in1], out,
                                     ctx.aux_[id]);
        break;
      case Op::kActGradLeaky: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = a.a[i] > 0.0 ? 1.0 : nd.scalar;
        break;
      }
      case Op::kActGradElu: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        out.resize(nd.rows, nd.cols);
        for (std::size_t i = 0; i < out.size(); ++i)
          out.a[i] = a.a[i] > 0.0 ? 1.0 : std::exp(a.a[i]);
        break;
      }
    }
  }
}

namespace {

void accumulate(DenseMatrix& dst, const DenseMatrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.a[i] += src.a[i];
}

}  // namespace

void backward(const Tape& tape, EvalContext& ctx, NodeId root) {
  if (root >= tape.size()) throw DomainError("backward: root out of range");
  const TapeNode& rn = tape.node(root);
  if (rn.rows != 1 || rn.cols != 1)
    throw DomainError("backward: root must be 1x1, is " +
                      std::to_string(rn.rows) + "x" + std::to_string(rn.cols));
  if (ctx.vals_.size() < tape.size() || ctx.vals_[root].size() == 0)
    throw DomainError("backward: run forward first");

  for (NodeId id = 0; id < tape.size(); ++id) {
    const TapeNode& nd = tape.node(id);
    ctx.grads_[id].resize(nd.rows, nd.cols);
    std::fill(ctx.grads_[id].a.begin(), ctx.grads_[id].a.end(), 0.0);
  }
  ctx.grads_[root](0, 0) = 1.0;

  DenseMatrix tmp;
  for (NodeId id = root;; --id) {
    const TapeNode& nd = tape.node(id);
    const DenseMatrix& g = ctx.grads_[id];
    switch (nd.op) {
      case Op::kConstant:
      case Op::kLeaf:
      case Op::kActGradLeaky:  // piecewise constant
        break;
      case Op::kMatMul: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        const DenseMatrix& b = ctx.vals_[nd.in1];
        DenseMatrix& da = ctx.grads_[nd.in0];
        DenseMatrix& db = ctx.grads_[nd.in1];
        if (!nd.flag_a && !nd.flag_b) {
          kernels::gemm(g, false, b, true, tmp);
          accumulate(da, tmp);
          kernels::gemm(a, true, g, false, tmp);
          accumulate(db, tmp);
        } else if (nd.flag_a && !nd.flag_b) {
          kernels::gemm(b, false, g, true, tmp);
          accumulate(da, tmp);
          kernels::gemm(a, false, g, false, tmp);
          accumulate(db, tmp);
        } else if (!nd.flag_a && nd.flag_b) {
          kernels::gemm(g, false, b, false, tmp);
          accumulate(da, tmp);
          kernels::gemm(g, true, a, false, tmp);
          accumulate(db, tmp);
        } else {
          kernels::gemm(b, true, g, true, tmp);
          accumulate(da, tmp);
          kernels::gemm(g, true, a, true, tmp);
          accumulate(db, tmp);
        }
        break;
      }
      case Op::kAdd:
        accumulate(ctx.grads_[nd.in0], g);
        accumulate(ctx.grads_[nd.in1], g);
        break;
      case Op::kSub: {
        accumulate(ctx.grads_[nd.in0], g);
        DenseMatrix& db = ctx.grads_[nd.in1];
        for (std::size_t i = 0; i < db.size(); ++i) db.a[i] -= g.a[i];
        break;
      }
      case Op::kMul: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        const DenseMatrix& b = ctx.vals_[nd.in1];
        DenseMatrix& da = ctx.grads_[nd.in0];
        DenseMatrix& db = ctx.grads_[nd.in1];
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.a[i] += g.a[i] * b.a[i];
          db.a[i] += g.a[i] * a.a[i];
        }
        break;
      }
      case Op::kScalarMul: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          da.a[i] += nd.scalar * g.a[i];
        break;
      }
      case Op::kRecip: {
        const DenseMatrix& y = ctx.vals_[id];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          da.a[i] -= g.a[i] * y.a[i] * y.a[i];
        break;
      }
      case Op::kLeakyRelu: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          da.a[i] += g.a[i] * (a.a[i] > 0.0 ? 1.0 : nd.scalar);
        break;
      }
      case Op::kElu: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          da.a[i] += g.a[i] * (a.a[i] > 0.0 ? 1.0 : std::exp(a.a[i]));
        break;
      }
      case Op::kTanh: {
        const DenseMatrix& y = ctx.vals_[id];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          da.a[i] += g.a[i] * (1.0 - y.a[i] * y.a[i]);
        break;
      }
      case Op::kSquare: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          da.a[i] += 2.0 * g.a[i] * a.a[i];
        break;
      }
      case Op::kSqrt: {
        const DenseMatrix& y = ctx.vals_[id];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          if (y.a[i] > 0.0) da.a[i] += g.a[i] / (2.0 * y.a[i]);
        break;
      }
      case Op::kSum: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        const double gv = g(0, 0);
        for (std::size_t i = 0; i < da.size(); ++i) da.a[i] += gv;
        break;
      }
      case Op::kMean: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        const double gv = g(0, 0) / static_cast<double>(da.size());
        for (std::size_t i = 0; i < da.size(); ++i) da.a[i] += gv;
        break;
      }
      case Op::kBroadcast: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        if (nd.kind == 0) {
          double s = 0.0;
          for (const double x : g.a) s += x;
          da(0, 0) += s;
        } else if (nd.kind == 1) {
          for (std::size_t i = 0; i < nd.rows; ++i) {
            const double* gi = g.row(i);
            double* d0 = da.row(0);
            for (std::size_t j = 0; j < nd.cols; ++j) d0[j] += gi[j];
          }
        } else {
          for (std::size_t i = 0; i < nd.rows; ++i) {
            const double* gi = g.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < nd.cols; ++j) s += gi[j];
            da(i, 0) += s;
          }
        }
        break;
      }
      case Op::kReshape: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i) da.a[i] += g.a[i];
        break;
      }
      case Op::kGatherRows: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < nd.indices.size(); ++i) {
          double* dst = da.row(nd.indices[i]);
          const double* src = g.row(i);
          for (std::size_t j = 0; j < nd.cols; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::kScatterRows: {
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < nd.indices.size(); ++i) {
          const double* src = g.row(nd.indices[i]);
          double* dst = da.row(i);
          for (std::size_t j = 0; j < nd.cols; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::kL2NormRows: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        const DenseMatrix& y = ctx.vals_[id];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < a.rows; ++i) {
          if (y(i, 0) <= 0.0) continue;
          const double gi = g(i, 0) / y(i, 0);
          const double* ai = a.row(i);
          double* di = da.row(i);
          for (std::size_t j = 0; j < a.cols; ++j) di[j] += gi * ai[j];
        }
        break;
      }
      case Op::kMinReduceRows:
      case Op::kMaxReduceRows: {
        if (nd.flag_a) break;  // stop-gradient
        DenseMatrix& da = ctx.grads_[nd.in0];
        const std::vector<std::size_t>& arg = ctx.aux_[id];
        for (std::size_t i = 0; i < arg.size(); ++i)
          da(i, arg[i]) += g(i, 0);
        break;
      }
      case Op::kSoftmaxRows: {
        const DenseMatrix& y = ctx.vals_[id];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < y.rows; ++i) {
          const double* yi = y.row(i);
          const double* gi = g.row(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols; ++j) dot += gi[j] * yi[j];
          double* di = da.row(i);
          for (std::size_t j = 0; j < y.cols; ++j)
            di[j] += yi[j] * (gi[j] - dot);
        }
        break;
      }
      case Op::kInterpEval: {
        const DenseMatrix& v = ctx.vals_[nd.in0];
        const DenseMatrix& q = ctx.vals_[nd.in1];
        DenseMatrix& dv = ctx.grads_[nd.in0];
        DenseMatrix& dq = ctx.grads_[nd.in1];
        const std::vector<std::size_t>& seg = ctx.aux_[id];
        const std::size_t segs = v.cols - 1;
        const double k = static_cast<double>(segs);
        for (std::size_t i = 0; i < q.rows; ++i) {
          for (std::size_t j = 0; j < q.cols; ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            const std::size_t s = seg[i * q.cols + j];
            const double t = std::clamp(q(i, j), 0.0, 1.0);
            const double frac = (t - static_cast<double>(s) / k) * k;
            dv(i, s) += gij * (1.0 - frac);
            dv(i, s + 1) += gij * frac;
            dq(i, j) += gij * (v(i, s + 1) - v(i, s)) * k;
          }
        }
        break;
      }
      case Op::kInterpInverse: {
        const DenseMatrix& v = ctx.vals_[nd.in0];
        const DenseMatrix& p = ctx.vals_[nd.in1];
        DenseMatrix& dv = ctx.grads_[nd.in0];
        DenseMatrix& dp = ctx.grads_[nd.in1];
        const std::vector<std::size_t>& seg = ctx.aux_[id];
        const double dx = 1.0 / static_cast<double>(v.cols - 1);
        for (std::size_t i = 0; i < p.rows; ++i) {
          for (std::size_t j = 0; j < p.cols; ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            const std::size_t s = seg[i * p.cols + j];
            if (s >= v.cols) continue;  // clamped query
            const double d = v(i, s + 1) - v(i, s);
            if (d <= 0.0) continue;  // flat stretch: left edge, zero slope
            const double pij = p(i, j);
            dp(i, j) += gij * dx / d;
            dv(i, s) += gij * dx * (pij - v(i, s + 1)) / (d * d);
            dv(i, s + 1) -= gij * dx * (pij - v(i, s)) / (d * d);
          }
        }
        break;
      }
      case Op::kActGradElu: {
        const DenseMatrix& a = ctx.vals_[nd.in0];
        DenseMatrix& da = ctx.grads_[nd.in0];
        for (std::size_t i = 0; i < g.size(); ++i)
          if (a.a[i] <= 0.0) da.a[i] += g.a[i] * std::exp(a.a[i]);
        break;
      }
    }
    if (id == 0) break;
  }
}

double finite_diff_check(const Tape& tape, EvalContext& ctx, NodeId root,
                         const std::vector<NodeId>& leaves, double h) {
  if (h < 1e-8 || h > 1e-4)
    throw PreconditionError("finite_diff_check: h must lie in [1e-8, 1e-4]");
  for (NodeId leaf : leaves)
    if (leaf >= tape.size() || tape.node(leaf).op != Op::kLeaf)
      throw DomainError("finite_diff_check: node is not a leaf");

  forward(tape, ctx);
  backward(tape, ctx, root);
  std::vector<DenseMatrix> analytic;
  analytic.reserve(leaves.size());
  for (NodeId leaf : leaves) analytic.push_back(ctx.grad(leaf));

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const NodeId leaf = leaves[li];
    DenseMatrix base = ctx.value(leaf);
    DenseMatrix probe = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
      probe.a[i] = base.a[i] + h;
      ctx.set_leaf(tape, leaf, probe);
      forward(tape, ctx);
      const double fp = ctx.value(root)(0, 0);
      probe.a[i] = base.a[i] - h;
      ctx.set_leaf(tape, leaf, probe);
      forward(tape, ctx);
      const double fm = ctx.value(root)(0, 0);
      probe.a[i] = base.a[i];
      const double numeric = (fp - fm) / (2.0 * h);
      const double err =
          std::abs(analytic[li].a[i] - numeric) / (std::abs(numeric) + 1e-8);
      worst = std::max(worst, err);
    }
    ctx.set_leaf(tape, leaf, base);
  }
  forward(tape, ctx);
  return worst;
}

// ---------------------------------------------------------------------------
// Derivative graphs

std::vector<NodeId> append_grad_nodes(Tape& t, NodeId root,
                                      const std::vector<NodeId>& leaves) {
  const std::size_t n0 = t.size();
  if (root >= n0) throw DomainError("grad_as_tape: root out of range");
  if (t.node(root).rows != 1 || t.node(root).cols != 1)
    throw DomainError("grad_as_tape: root must be 1x1");
  for (NodeId leaf : leaves)
    if (leaf >= n0 || t.node(leaf).op != Op::kLeaf)
      throw DomainError("grad_as_tape: node is not a leaf");

  std::vector<NodeId> adj(n0, kNoNode);
  {
    DenseMatrix one(1, 1);
    one(0, 0) = 1.0;
    adj[root] = t.constant(std::move(one));
  }
  auto accum = [&](NodeId target, NodeId g) {
    adj[target] = adj[target] == kNoNode ? g : t.add(adj[target], g);
  };
  auto ones = [&](std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    std::fill(m.a.begin(), m.a.end(), 1.0);
    return t.constant(std::move(m));
  };

  for (NodeId id = root;; --id) {
    const TapeNode nd = t.node(id);  // copy: t.nodes_ may reallocate
    const NodeId g = adj[id];
    if (g != kNoNode) {
      switch (nd.op) {
        case Op::kConstant:
        case Op::kLeaf:
        case Op::kActGradLeaky:
          break;
        case Op::kMatMul:
          if (!nd.flag_a && !nd.flag_b) {
            accum(nd.in0, t.matmul(g, nd.in1, false, true));
            accum(nd.in1, t.matmul(nd.in0, g, true, false));
          } else if (nd.flag_a && !nd.flag_b) {
            accum(nd.in0, t.matmul(nd.in1, g, false, true));
            accum(nd.in1, t.matmul(nd.in0, g, false, false));
          } else if (!nd.flag_a && nd.flag_b) {
            accum(nd.in0, t.matmul(g, nd.in1, false, false));
            accum(nd.in1, t.matmul(g, nd.in0, true, false));
          } else {
            accum(nd.in0, t.matmul(nd.in1, g, true, true));
            accum(nd.in1, t.matmul(g, nd.in0, true, true));
          }
          break;
        case Op::kAdd:
          accum(nd.in0, g);
          accum(nd.in1, g);
          break;
        case Op::kSub:
          accum(nd.in0, g);
          accum(nd.in1, t.scalar_mul(g, -1.0));
          break;
        case Op::kMul:
          accum(nd.in0, t.mul(g, nd.in1));
          accum(nd.in1, t.mul(g, nd.in0));
          break;
        case Op::kScalarMul:
          accum(nd.in0, t.scalar_mul(g, nd.scalar));
          break;
        case Op::kRecip:
          accum(nd.in0, t.scalar_mul(t.mul(g, t.square(id)), -1.0));
          break;
        case Op::kLeakyRelu:
          accum(nd.in0, t.mul(g, t.act_grad_leaky(nd.in0, nd.scalar)));
          break;
        case Op::kElu:
          accum(nd.in0, t.mul(g, t.act_grad_elu(nd.in0)));
          break;
        case Op::kTanh:
          accum(nd.in0,
                t.mul(g, t.sub(ones(nd.rows, nd.cols), t.square(id))));
          break;
        case Op::kSquare:
          accum(nd.in0, t.scalar_mul(t.mul(g, nd.in0), 2.0));
          break;
        case Op::kSqrt:
          accum(nd.in0, t.mul(g, t.recip(t.scalar_mul(id, 2.0), 0.0)));
          break;
        case Op::kSum: {
          const std::size_t ar = t.node(nd.in0).rows;
          const std::size_t ac = t.node(nd.in0).cols;
          accum(nd.in0, t.broadcast_scalar(g, ar, ac));
          break;
        }
        case Op::kMean: {
          const std::size_t ar = t.node(nd.in0).rows;
          const std::size_t ac = t.node(nd.in0).cols;
          const double inv = 1.0 / static_cast<double>(ar * ac);
          accum(nd.in0, t.broadcast_scalar(t.scalar_mul(g, inv), ar, ac));
          break;
        }
        case Op::kBroadcast:
          if (nd.kind == 0) {
            accum(nd.in0, t.sum(g));
          } else if (nd.kind == 1) {
            accum(nd.in0, t.matmul(ones(1, nd.rows), g));
          } else {
            accum(nd.in0, t.matmul(g, ones(nd.cols, 1)));
          }
          break;
        case Op::kReshape: {
          const std::size_t ar = t.node(nd.in0).rows;
          const std::size_t ac = t.node(nd.in0).cols;
          accum(nd.in0, t.reshape(g, ar, ac));
          break;
        }
        case Op::kGatherRows: {
          const std::size_t ar = t.node(nd.in0).rows;
          accum(nd.in0, t.scatter_rows(g, nd.indices, ar));
          break;
        }
        case Op::kScatterRows:
          accum(nd.in0, t.gather_rows(g, nd.indices));
          break;
        case Op::kL2NormRows: {
          const std::size_t ac = t.node(nd.in0).cols;
          NodeId coef = t.broadcast_col(t.mul(g, t.recip(id, 0.0)), ac);
          accum(nd.in0, t.mul(coef, nd.in0));
          break;
        }
        case Op::kMinReduceRows:
        case Op::kMaxReduceRows:
          if (!nd.flag_a)
            throw UnsupportedSecondOrder(
                std::string("grad_as_tape: ") + op_name(nd.op) +
                " with flowing gradient has no tape-expressible adjoint");
          break;  // stop-gradient contributes nothing
        case Op::kSoftmaxRows: {
          NodeId dot = t.matmul(t.mul(g, id), ones(nd.cols, 1));
          accum(nd.in0, t.mul(id, t.sub(g, t.broadcast_col(dot, nd.cols))));
          break;
        }
        case Op::kInterpEval:
        case Op::kInterpInverse:
          throw UnsupportedSecondOrder(
              std::string("grad_as_tape: ") + op_name(nd.op) +
              " has no tape-expressible adjoint");
        case Op::kActGradElu:
          accum(nd.in0,
                t.mul(g, t.sub(id, t.act_grad_leaky(nd.in0, 0.0))));
          break;
      }
    }
    if (id == 0) break;
  }

  std::vector<NodeId> grads;
  grads.reserve(leaves.size());
  for (NodeId leaf : leaves) {
    if (adj[leaf] == kNoNode) {
      const std::size_t lr = t.node(leaf).rows;
      const std::size_t lc = t.node(leaf).cols;
      adj[leaf] = t.constant(DenseMatrix(lr, lc));  // unreachable: zero grad
    }
    grads.push_back(adj[leaf]);
  }
  return grads;
}

GradTape grad_as_tape(const Tape& src, NodeId root,
                      const std::vector<NodeId>& leaves) {
  GradTape out{src, {}};
  out.grads = append_grad_nodes(out.tape, root, leaves);
  return out;
}

DenseMatrix hessian_vector_product(const Tape& tape, const EvalContext& ctx,
                                   NodeId root, NodeId wrt,
                                   const DenseMatrix& v) {
  const TapeNode& wn = tape.node(wrt);
  if (v.rows != wn.rows || v.cols != wn.cols)
    throw ShapeError("hessian_vector_product: v shape mismatch");
  GradTape gt = grad_as_tape(tape, root, {wrt});
  const NodeId dot = gt.tape.sum(gt.tape.mul(gt.grads[0], gt.tape.constant(v)));
  EvalContext c2;
  for (NodeId id = 0; id < tape.size(); ++id) {
    if (tape.node(id).op != Op::kLeaf || !ctx.has_value(id)) continue;
    c2.set_leaf(gt.tape, id, ctx.value(id));
  }
  forward(gt.tape, c2);
  backward(gt.tape, c2, dot);
  return c2.grad(wrt);
}

}  // namespace swd
