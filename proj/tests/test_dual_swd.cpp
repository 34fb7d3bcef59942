#include <cmath>
#include <vector>

#include "doctest.h"
#include "swd/dual_swd.hpp"
#include "swd/errors.hpp"
#include "swd/matrix.hpp"
#include "swd/rng.hpp"
#include "swd/tape.hpp"

using namespace swd;

TEST_CASE("dual heads reproduce a worked example") {
  // u=(1,2), w=(1,1), v=(0,-1), slope 0.2. Column t=(1, 0.5):
  //   row 0: leaky(1*1+0)   = 1    -> 1*1    = 1
  //   row 1: leaky(1*0.5-1) = -0.1 -> 2*-0.1 = -0.2
  Tape t;
  NodeId yp = t.leaf(2, 1, "yp");
  NodeId u = t.leaf(2, 1, "u");
  NodeId w = t.leaf(2, 1, "w");
  NodeId v = t.leaf(2, 1, "v");
  DualHeads heads = append_dual_heads(t, yp, u, w, v, 0.2);
  EvalContext ctx;
  DenseMatrix ypv(2, 1), uv(2, 1), wv(2, 1), vv(2, 1);
  ypv(0, 0) = 1.0; ypv(1, 0) = 0.5;
  uv(0, 0) = 1.0; uv(1, 0) = 2.0;
  wv(0, 0) = 1.0; wv(1, 0) = 1.0;
  vv(0, 0) = 0.0; vv(1, 0) = -1.0;
  ctx.set_leaf(t, yp, ypv);
  ctx.set_leaf(t, u, uv);
  ctx.set_leaf(t, w, wv);
  ctx.set_leaf(t, v, vv);
  forward(t, ctx);
  CHECK(ctx.value(heads.values)(0, 0) == doctest::Approx(1.0));
  CHECK(ctx.value(heads.values)(1, 0) == doctest::Approx(-0.2));
  // dF/dt = u * w * leaky'(w t + v): 1*1*1 = 1 and 2*1*0.2 = 0.4.
  CHECK(ctx.value(heads.derivs)(0, 0) == doctest::Approx(1.0));
  CHECK(ctx.value(heads.derivs)(1, 0) == doctest::Approx(0.4));
}

TEST_CASE("dual head derivatives match finite differences of the values") {
  RngStream rng(51);
  const std::size_t r = 5, b = 7;
  Tape t;
  NodeId yp = t.leaf(r, b, "yp");
  NodeId u = t.leaf(r, 1, "u");
  NodeId w = t.leaf(r, 1, "w");
  NodeId v = t.leaf(r, 1, "v");
  DualHeads heads = append_dual_heads(t, yp, u, w, v);
  DenseMatrix ypv = rng.gaussian_matrix(r, b);
  DenseMatrix uv = rng.gaussian_matrix(r, 1);
  DenseMatrix wv = rng.gaussian_matrix(r, 1);
  DenseMatrix vv = rng.gaussian_matrix(r, 1);
  auto values_at = [&](const DenseMatrix& pts) {
    EvalContext c;
    c.set_leaf(t, yp, pts);
    c.set_leaf(t, u, uv);
    c.set_leaf(t, w, wv);
    c.set_leaf(t, v, vv);
    forward(t, c);
    return c.value(heads.values);
  };
  EvalContext ctx;
  ctx.set_leaf(t, yp, ypv);
  ctx.set_leaf(t, u, uv);
  ctx.set_leaf(t, w, wv);
  ctx.set_leaf(t, v, vv);
  forward(t, ctx);
  const DenseMatrix& derivs = ctx.value(heads.derivs);
  const double h = 1e-6;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      // Skip points whose pre-activation sits within h of the knee.
      if (std::abs(wv(i, 0) * ypv(i, j) + vv(i, 0)) < 1e-4) continue;
      DenseMatrix plus = ypv, minus = ypv;
      plus(i, j) += h;
      minus(i, j) -= h;
      const double numeric =
          (values_at(plus)(i, j) - values_at(minus)(i, j)) / (2.0 * h);
      CHECK(derivs(i, j) == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("dual heads are positively homogeneous in u") {
  RngStream rng(52);
  Tape t;
  NodeId yp = t.leaf(3, 4, "yp");
  NodeId u = t.leaf(3, 1, "u");
  NodeId w = t.leaf(3, 1, "w");
  NodeId v = t.leaf(3, 1, "v");
  DualHeads heads = append_dual_heads(t, yp, u, w, v);
  DenseMatrix ypv = rng.gaussian_matrix(3, 4);
  DenseMatrix uv = rng.gaussian_matrix(3, 1);
  DenseMatrix wv = rng.gaussian_matrix(3, 1);
  DenseMatrix vv = rng.gaussian_matrix(3, 1);
  auto run = [&](double scale) {
    EvalContext c;
    DenseMatrix su = uv;
    for (auto& x : su.a) x *= scale;
    c.set_leaf(t, yp, ypv);
    c.set_leaf(t, u, su);
    c.set_leaf(t, w, wv);
    c.set_leaf(t, v, vv);
    forward(t, c);
    return std::pair<DenseMatrix, DenseMatrix>(c.value(heads.values),
                                               c.value(heads.derivs));
  };
  auto [v1, d1] = run(1.0);
  auto [v3, d3] = run(3.0);
  for (std::size_t i = 0; i < v1.size(); ++i) {
    CHECK(v3.a[i] == doctest::Approx(3.0 * v1.a[i]).epsilon(1e-12));
    CHECK(d3.a[i] == doctest::Approx(3.0 * d1.a[i]).epsilon(1e-12));
  }
}

TEST_CASE("dual_block_forward transposes to samples-as-rows") {
  RngStream rng(53);
  const std::size_t r = 4, b = 6;
  DenseMatrix yp = rng.gaussian_matrix(r, b);
  std::vector<double> u = {1.0, -0.5, 2.0, 0.3};
  std::vector<double> w = {0.7, 1.2, -1.0, 0.9};
  std::vector<double> v = {0.0, 0.4, -0.2, 1.0};
  DenseMatrix out = dual_block_forward(yp, u, w, v, 0.2);
  CHECK(out.rows == b);
  CHECK(out.cols == r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const double pre = w[i] * yp(i, j) + v[i];
      const double leak = pre > 0.0 ? pre : 0.2 * pre;
      CHECK(out(j, i) == doctest::Approx(u[i] * leak).epsilon(1e-12));
    }
}

TEST_CASE("dual heads validate parameter shapes") {
  Tape t;
  NodeId yp = t.leaf(3, 4, "yp");
  NodeId bad = t.leaf(2, 1, "bad");
  NodeId u = t.leaf(3, 1, "u");
  CHECK_THROWS_AS(append_dual_heads(t, yp, bad, u, u), ShapeError);
  DenseMatrix m(3, 4, 0.5);
  CHECK_THROWS_AS(dual_block_forward(m, {1.0}, {1.0, 1.0, 1.0},
                                     {0.0, 0.0, 0.0}),
                  ShapeError);
}
