#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "swd/errors.hpp"
#include "swd/matrix.hpp"
#include "swd/rng.hpp"
#include "swd/tape.hpp"

using namespace swd;

namespace {

// Values bounded away from 0 so leaky_relu / sqrt / recip kinks and the
// finite-difference step never interact.
DenseMatrix away_from_zero(RngStream& rng, std::size_t r, std::size_t c,
                           double margin = 0.2) {
  DenseMatrix m(r, c);
  for (auto& v : m.a) {
    const double g = rng.gaussian();
    v = (g >= 0.0 ? margin : -margin) + g;
  }
  return m;
}

double fd_scalar_root(Tape& t, NodeId root, const std::vector<NodeId>& leaves,
                      EvalContext& ctx, double h = 1e-5) {
  forward(t, ctx);
  return finite_diff_check(t, ctx, root, leaves, h);
}

}  // namespace

TEST_CASE("elementwise and reduction ops pass finite differences") {
  RngStream rng(101);
  for (int rep = 0; rep < 4; ++rep) {
    Tape t;
    NodeId a = t.leaf(3, 4, "a");
    NodeId b = t.leaf(3, 4, "b");
    NodeId sum_ab = t.add(a, b);
    NodeId mixed = t.mul(t.sub(sum_ab, t.scalar_mul(b, 0.3)), a);
    NodeId acts = t.add(t.leaky_relu(mixed, 0.2), t.elu(t.tanh(a)));
    NodeId sq = t.add(t.square(acts), t.sqrt(t.square(b)));
    NodeId root = t.mean(sq);
    EvalContext ctx;
    ctx.set_leaf(t, a, away_from_zero(rng, 3, 4));
    ctx.set_leaf(t, b, away_from_zero(rng, 3, 4));
    CHECK(fd_scalar_root(t, root, {a, b}, ctx) < 1e-4);
  }
}

TEST_CASE("matmul passes finite differences in all transpose modes") {
  RngStream rng(102);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      Tape t;
      NodeId a = t.leaf(ta ? 5 : 3, ta ? 3 : 5, "a");
      NodeId b = t.leaf(tb ? 4 : 5, tb ? 5 : 4, "b");
      NodeId root = t.sum(t.matmul(a, b, ta, tb));
      EvalContext ctx;
      ctx.set_leaf(t, a, rng.gaussian_matrix(t.node(a).rows, t.node(a).cols));
      ctx.set_leaf(t, b, rng.gaussian_matrix(t.node(b).rows, t.node(b).cols));
      CHECK(fd_scalar_root(t, root, {a, b}, ctx) < 1e-4);
    }
  }
}

TEST_CASE("matmul gradient matches the closed form") {
  // f = sum(A B): dA = ones * B^T, dB = A^T * ones.
  RngStream rng(103);
  Tape t;
  NodeId a = t.leaf(2, 3, "a");
  NodeId b = t.leaf(3, 4, "b");
  NodeId root = t.sum(t.matmul(a, b));
  EvalContext ctx;
  DenseMatrix av = rng.gaussian_matrix(2, 3), bv = rng.gaussian_matrix(3, 4);
  ctx.set_leaf(t, a, av);
  ctx.set_leaf(t, b, bv);
  forward(t, ctx);
  backward(t, ctx, root);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double want = 0.0;
      for (std::size_t c = 0; c < 4; ++c) want += bv(j, c);
      CHECK(ctx.grad(a)(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double want = 0.0;
      for (std::size_t r = 0; r < 2; ++r) want += av(r, i);
      CHECK(ctx.grad(b)(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("broadcast, reshape, gather and scatter pass finite differences") {
  RngStream rng(104);
  Tape t;
  NodeId s = t.leaf(1, 1, "s");
  NodeId row = t.leaf(1, 4, "row");
  NodeId col = t.leaf(3, 1, "col");
  NodeId m = t.leaf(3, 4, "m");
  NodeId combo = t.mul(t.add(t.broadcast_scalar(s, 3, 4),
                             t.add(t.broadcast_row(row, 3),
                                   t.broadcast_col(col, 4))),
                       m);
  NodeId re = t.reshape(combo, 4, 3);
  NodeId gathered = t.gather_rows(re, {0, 2, 2});
  NodeId scattered = t.scatter_rows(gathered, {1, 0, 1}, 5);
  NodeId root = t.mean(t.square(scattered));
  EvalContext ctx;
  ctx.set_leaf(t, s, rng.gaussian_matrix(1, 1));
  ctx.set_leaf(t, row, rng.gaussian_matrix(1, 4));
  ctx.set_leaf(t, col, rng.gaussian_matrix(3, 1));
  ctx.set_leaf(t, m, rng.gaussian_matrix(3, 4));
  CHECK(fd_scalar_root(t, root, {s, row, col, m}, ctx) < 1e-4);
}

TEST_CASE("l2norm, recip, softmax and min/max reductions pass fd") {
  RngStream rng(105);
  Tape t;
  NodeId a = t.leaf(4, 5, "a");
  // Random weights keep every entry's total gradient well away from zero
  // (a zero analytic gradient would drown in central-difference roundoff).
  NodeId wm = t.constant(rng.gaussian_matrix(4, 5), "wm");
  NodeId wc = t.constant(rng.gaussian_matrix(4, 1), "wc");
  NodeId norms = t.l2norm_rows(a);  // inputs off zero, norms well above guard
  NodeId inv = t.recip(norms, 1e-12);
  NodeId soft = t.softmax_rows(a);
  NodeId range = t.sub(t.max_rows(a), t.min_rows(a));
  NodeId root = t.add(t.sum(t.mul(soft, wm)),
                      t.add(t.sum(t.mul(inv, wc)),
                            t.sum(t.mul(range, wc))));
  EvalContext ctx;
  ctx.set_leaf(t, a, away_from_zero(rng, 4, 5));
  CHECK(fd_scalar_root(t, root, {a}, ctx) < 1e-4);
}

TEST_CASE("min/max stop-gradient variants contribute nothing") {
  Tape t;
  NodeId a = t.leaf(2, 3, "a");
  NodeId root = t.sum(t.add(t.min_rows(a, GradMode::kStop),
                            t.max_rows(a, GradMode::kStop)));
  EvalContext ctx;
  DenseMatrix v(2, 3);
  for (std::size_t i = 0; i < v.size(); ++i) v.a[i] = 0.5 * (i + 1);
  ctx.set_leaf(t, a, v);
  forward(t, ctx);
  backward(t, ctx, root);
  CHECK(fro_norm(ctx.grad(a)) == 0.0);
}

TEST_CASE("interp ops pass fd when queries sit inside segments") {
  RngStream rng(106);
  const std::size_t knots = 9, segs = knots - 1;
  Tape t;
  NodeId curve = t.leaf(2, knots, "curve");
  NodeId q = t.leaf(2, 6, "q");
  NodeId y = t.interp_eval(curve, q);
  NodeId back = t.interp_inverse(curve, y);
  NodeId root = t.mean(t.add(t.square(y), back));
  DenseMatrix cv(2, knots);
  for (std::size_t i = 0; i < 2; ++i) {
    double acc = 0.1;
    for (std::size_t j = 0; j < knots; ++j) {
      cv(i, j) = acc;
      acc += 0.2 + 0.5 * rng.uniform01();  // strictly increasing
    }
  }
  DenseMatrix qv(2, 6);
  for (auto& v : qv.a) {
    // center of a random segment +- 30%: stays off every knot by >= 0.2/segs
    const double seg = std::floor(rng.uniform01() * segs);
    v = (seg + 0.5 + 0.6 * (rng.uniform01() - 0.5)) / segs;
  }
  EvalContext ctx;
  ctx.set_leaf(t, curve, cv);
  ctx.set_leaf(t, q, qv);
  CHECK(fd_scalar_root(t, root, {curve, q}, ctx, 1e-6) < 1e-4);
}

TEST_CASE("activation-derivative ops expose the analytic slopes") {
  Tape t;
  NodeId a = t.leaf(1, 4, "a");
  NodeId gl = t.act_grad_leaky(a, 0.2);
  NodeId ge = t.act_grad_elu(a);
  NodeId root = t.sum(t.add(gl, ge));
  EvalContext ctx;
  DenseMatrix v(1, 4);
  v(0, 0) = -1.5; v(0, 1) = -0.3; v(0, 2) = 0.4; v(0, 3) = 2.0;
  ctx.set_leaf(t, a, v);
  forward(t, ctx);
  CHECK(ctx.value(gl)(0, 0) == 0.2);
  CHECK(ctx.value(gl)(0, 2) == 1.0);
  CHECK(ctx.value(ge)(0, 1) == doctest::Approx(std::exp(-0.3)));
  CHECK(ctx.value(ge)(0, 3) == 1.0);
  CHECK(fd_scalar_root(t, root, {a}, ctx, 1e-6) < 1e-4);
}

TEST_CASE("forward demands every leaf and checks shapes") {
  Tape t;
  NodeId a = t.leaf(2, 2, "weights");
  NodeId root = t.sum(a);
  (void)root;
  EvalContext ctx;
  try {
    forward(t, ctx);
    CHECK(false);
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("weights") != std::string::npos);
  }
  CHECK_THROWS_AS(ctx.set_leaf(t, a, DenseMatrix(3, 2)), ShapeError);
}

TEST_CASE("backward requires a scalar root after a forward pass") {
  Tape t;
  NodeId a = t.leaf(2, 2, "a");
  NodeId sq = t.square(a);
  NodeId root = t.sum(sq);
  EvalContext ctx;
  ctx.set_leaf(t, a, identity(2));
  CHECK_THROWS_AS(backward(t, ctx, root), DomainError);  // no forward yet
  forward(t, ctx);
  CHECK_THROWS_AS(backward(t, ctx, sq), DomainError);  // 2x2 root
  backward(t, ctx, root);
  CHECK(ctx.grad(a)(0, 0) == doctest::Approx(2.0));
  CHECK(ctx.grad(a)(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("tape rejects malformed graphs at build time") {
  Tape t;
  NodeId a = t.leaf(2, 3, "a");
  NodeId b = t.leaf(3, 2, "b");
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(t.reshape(a, 4, 2), ShapeError);
  CHECK_THROWS_AS(t.gather_rows(a, {5}), ShapeError);
  CHECK_THROWS_AS(t.scatter_rows(a, {0}, 4), ShapeError);
  CHECK_THROWS_AS(t.broadcast_scalar(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(t.leaf(0, 1), ShapeError);
  CHECK_THROWS_AS(t.recip(a, -1.0), DomainError);
}

TEST_CASE("finite_diff_check rejects out-of-range step sizes") {
  Tape t;
  NodeId a = t.leaf(1, 1, "a");
  NodeId root = t.square(a);
  EvalContext ctx;
  ctx.set_leaf(t, a, identity(1));
  forward(t, ctx);
  CHECK_THROWS_AS(finite_diff_check(t, ctx, root, {a}, 1e-2),
                  PreconditionError);
  CHECK_THROWS_AS(finite_diff_check(t, ctx, root, {a}, 1e-9),
                  PreconditionError);
}

TEST_CASE("grad_as_tape reproduces backward exactly") {
  RngStream rng(107);
  Tape t;
  NodeId a = t.leaf(3, 3, "a");
  NodeId b = t.leaf(3, 3, "b");
  NodeId root = t.mean(t.square(t.matmul(t.tanh(a), b)));
  GradTape gt = grad_as_tape(t, root, {a, b});
  DenseMatrix av = rng.gaussian_matrix(3, 3), bv = rng.gaussian_matrix(3, 3);

  EvalContext ctx;
  ctx.set_leaf(t, a, av);
  ctx.set_leaf(t, b, bv);
  forward(t, ctx);
  backward(t, ctx, root);

  EvalContext gctx;
  gctx.set_leaf(gt.tape, a, av);  // original ids stay valid
  gctx.set_leaf(gt.tape, b, bv);
  forward(gt.tape, gctx);
  CHECK(max_abs_diff(gctx.value(gt.grads[0]), ctx.grad(a)) == 0.0);
  CHECK(max_abs_diff(gctx.value(gt.grads[1]), ctx.grad(b)) == 0.0);
}

TEST_CASE("append_grad_nodes matches backward on the same tape") {
  RngStream rng(108);
  Tape t;
  NodeId x = t.leaf(2, 5, "x");
  NodeId w = t.leaf(2, 2, "w");
  NodeId out = t.leaky_relu(t.matmul(w, x), 0.2);
  NodeId root = t.sum(out);
  std::vector<NodeId> gnodes = append_grad_nodes(t, root, {x});
  NodeId penalty = t.sum(t.square(gnodes[0]));

  EvalContext ctx;
  ctx.set_leaf(t, x, away_from_zero(rng, 2, 5));
  ctx.set_leaf(t, w, away_from_zero(rng, 2, 2));
  forward(t, ctx);
  backward(t, ctx, root);
  CHECK(max_abs_diff(ctx.value(gnodes[0]), ctx.grad(x)) == 0.0);

  // The penalty on the appended gradient is itself differentiable.
  EvalContext ctx2;
  ctx2.set_leaf(t, x, away_from_zero(rng, 2, 5));
  ctx2.set_leaf(t, w, away_from_zero(rng, 2, 2));
  CHECK(fd_scalar_root(t, penalty, {x, w}, ctx2, 1e-6) < 1e-4);
}

TEST_CASE("hessian_vector_product matches finite differences of gradients") {
  RngStream rng(109);
  Tape t;
  NodeId a = t.leaf(3, 2, "a");
  NodeId root = t.mean(t.square(t.tanh(a)));
  DenseMatrix av = rng.gaussian_matrix(3, 2);
  DenseMatrix v = rng.gaussian_matrix(3, 2);
  EvalContext ctx;
  ctx.set_leaf(t, a, av);
  forward(t, ctx);
  DenseMatrix hv = hessian_vector_product(t, ctx, root, a, v);

  const double h = 1e-6;
  DenseMatrix plus = av, minus = av;
  for (std::size_t i = 0; i < av.size(); ++i) {
    plus.a[i] += h * v.a[i];
    minus.a[i] -= h * v.a[i];
  }
  auto grad_at = [&](const DenseMatrix& at) {
    EvalContext c;
    c.set_leaf(t, a, at);
    forward(t, c);
    backward(t, c, root);
    return c.grad(a);
  };
  DenseMatrix gp = grad_at(plus), gm = grad_at(minus);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double numeric = (gp.a[i] - gm.a[i]) / (2.0 * h);
    CHECK(hv.a[i] == doctest::Approx(numeric).epsilon(1e-4));
  }
}

TEST_CASE("second-order expansion refuses interp and flow-mode extrema") {
  Tape t;
  NodeId curve = t.leaf(1, 5, "curve");
  NodeId q = t.leaf(1, 2, "q");
  NodeId y = t.interp_eval(curve, q);
  NodeId root = t.sum(y);
  try {
    grad_as_tape(t, root, {q});
    CHECK(false);
  } catch (const UnsupportedSecondOrder& e) {
    CHECK(std::string(e.what()).find("interp_eval") != std::string::npos);
  }

  Tape t2;
  NodeId a = t2.leaf(2, 3, "a");
  NodeId root2 = t2.sum(t2.min_rows(a, GradMode::kFlow));
  CHECK_THROWS_AS(grad_as_tape(t2, root2, {a}), UnsupportedSecondOrder);
  // Stop-gradient extrema are fine (constant wrt input).
  Tape t3;
  NodeId a3 = t3.leaf(2, 3, "a");
  NodeId root3 = t3.sum(t3.min_rows(a3, GradMode::kStop));
  CHECK_NOTHROW(grad_as_tape(t3, root3, {a3}));
}
