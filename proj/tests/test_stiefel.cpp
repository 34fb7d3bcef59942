#include <cmath>
#include <vector>

#include "doctest.h"
#include "swd/linalg.hpp"
#include "swd/matrix.hpp"
#include "swd/rng.hpp"
#include "swd/stiefel.hpp"

using namespace swd;

TEST_CASE("first adam step moves by lr times the gradient sign") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState st;
  DenseMatrix p(2, 2, 1.0);
  DenseMatrix g(2, 2);
  g(0, 0) = 4.0; g(0, 1) = -0.5; g(1, 0) = 1e-3; g(1, 1) = 0.0;
  adam_step(st, p, g, cfg);
  // mhat = g, vhat = g^2 after bias correction, so the update is
  // lr * g / (|g| + eps): the sign of g at unit magnitude.
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-8));
  CHECK(p(0, 1) == doctest::Approx(1.0 + 0.01).epsilon(1e-8));
  CHECK(p(1, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
  CHECK(p(1, 1) == 1.0);  // zero gradient, zero moments: no motion
  CHECK(st.step == 1);
}

TEST_CASE("adam shrinks oscillating coordinates against steady ones") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  AdamState st;
  DenseMatrix p(1, 2, 0.0);
  for (int i = 0; i < 60; ++i) {
    DenseMatrix g(1, 2);
    g(0, 0) = 1.0;                       // steady descent direction
    g(0, 1) = (i % 2 == 0) ? 1.0 : -1.0; // pure oscillation
    adam_step(st, p, g, cfg);
  }
  CHECK(p(0, 0) < -3.0);
  CHECK(std::abs(p(0, 1)) < 0.5);
}

TEST_CASE("adam converges on a separable quadratic") {
  // With a constant lr the iterates settle into an O(lr) orbit around the
  // minimum, so the test finishes with a smaller-stepped polish phase.
  AdamConfig cfg;
  cfg.lr = 0.05;
  AdamState st;
  DenseMatrix p(3, 1);
  p(0, 0) = 2.0; p(1, 0) = -1.5; p(2, 0) = 0.7;
  auto run = [&](int steps) {
    for (int i = 0; i < steps; ++i) {
      DenseMatrix g(3, 1);
      for (std::size_t j = 0; j < 3; ++j) g(j, 0) = 2.0 * p(j, 0);
      adam_step(st, p, g, cfg);
    }
  };
  run(2000);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(p(j, 0)) < 0.02);
  cfg.lr = 1e-3;
  run(2000);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(p(j, 0)) < 1e-3);
}

TEST_CASE("stiefel tangent projections are skew in the frame of o") {
  RngStream rng(41);
  for (TangentKind kind : {TangentKind::kHalfDiff, TangentKind::kSymCorrected}) {
    DenseMatrix o = random_orthogonal(rng, 5);
    DenseMatrix g = rng.gaussian_matrix(5, 5);
    DenseMatrix xi = stiefel_tangent(o, g, kind);
    // O^T xi + xi^T O == 0 characterizes the tangent space at O.
    DenseMatrix ot_xi(5, 5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += o(k, i) * xi(k, j);
        ot_xi(i, j) = s;
      }
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        CHECK(ot_xi(i, j) + ot_xi(j, i) == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("tangent projection is idempotent for half-diff") {
  RngStream rng(42);
  DenseMatrix o = random_orthogonal(rng, 4);
  DenseMatrix g = rng.gaussian_matrix(4, 4);
  DenseMatrix once = stiefel_tangent(o, g, TangentKind::kHalfDiff);
  DenseMatrix twice = stiefel_tangent(o, once, TangentKind::kHalfDiff);
  CHECK(max_abs_diff(once, twice) < 1e-12);
}

TEST_CASE("qr_retract fixes orthogonal matrices and repairs perturbed ones") {
  RngStream rng(43);
  DenseMatrix o = random_orthogonal(rng, 6);
  DenseMatrix back = qr_retract(o);
  CHECK(max_abs_diff(back, o) < 1e-12);  // already on the manifold

  DenseMatrix drifted = o;
  for (auto& v : drifted.a) v += 1e-3 * rng.gaussian();
  DenseMatrix fixed = qr_retract(drifted);
  CHECK(orthogonality_drift(fixed) < 1e-12);
  CHECK(max_abs_diff(fixed, o) < 0.05);  // small repair, not a jump
}

TEST_CASE("stiefel_adam_step descends a trace objective on the manifold") {
  // Minimize f(O) = -tr(A^T O): gradient is -A; optimum is the polar factor
  // of A. The iterate must stay orthogonal and drive f down.
  RngStream rng(44);
  const std::size_t n = 4;
  DenseMatrix a = rng.gaussian_matrix(n, n);
  DenseMatrix o = random_orthogonal(rng, n);
  AdamConfig cfg;
  cfg.lr = 0.02;
  StiefelAdamState st;
  auto f = [&](const DenseMatrix& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s -= a(i, j) * q(i, j);
    return s;
  };
  const double f0 = f(o);
  for (int i = 0; i < 800; ++i) {
    DenseMatrix g(n, n);
    for (std::size_t k = 0; k < g.size(); ++k) g.a[k] = -a.a[k];
    stiefel_adam_step(st, o, g, cfg);
  }
  CHECK(orthogonality_drift(o) < 1e-12);
  CHECK(f(o) < f0 - 0.5);

  // The polar optimum: f(O*) = -sum of singular values.
  DenseMatrix ata(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a(k, i) * a(k, j);
      ata(i, j) = s;
    }
  EigResult eig = sym_eig_small(ata);
  double nuclear = 0.0;
  for (double v : eig.values) nuclear += std::sqrt(std::max(0.0, v));
  CHECK(f(o) == doctest::Approx(-nuclear).epsilon(0.02));
}

TEST_CASE("orthogonality holds through long randomized optimization") {
  RngStream rng(45);
  DenseMatrix o = random_orthogonal(rng, 8);
  AdamConfig cfg;
  cfg.lr = 3e-3;
  StiefelAdamState st;
  for (int i = 0; i < 2000; ++i) {
    DenseMatrix g = rng.gaussian_matrix(8, 8);
    stiefel_adam_step(st, o, g, cfg);
    if (i % 500 == 0) CHECK(orthogonality_drift(o) < 1e-10);
  }
  CHECK(orthogonality_drift(o) < 1e-10);
}

TEST_CASE("stiefel updates are equivariant under signed permutations") {
  RngStream rng(46);
  const std::size_t n = 4;
  // Signed permutation: rows swapped with one sign flip.
  DenseMatrix perm(n, n);
  perm(0, 2) = 1.0; perm(1, 0) = -1.0; perm(2, 3) = 1.0; perm(3, 1) = 1.0;
  DenseMatrix o = random_orthogonal(rng, n);
  DenseMatrix po(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += perm(i, k) * o(k, j);
      po(i, j) = s;
    }
  AdamConfig cfg;
  cfg.lr = 0.01;
  StiefelAdamState s1, s2;
  for (int step = 0; step < 50; ++step) {
    DenseMatrix g = rng.gaussian_matrix(n, n);
    DenseMatrix pg(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += perm(i, k) * g(k, j);
        pg(i, j) = s;
      }
    stiefel_adam_step(s1, o, g, cfg);
    stiefel_adam_step(s2, po, pg, cfg);
  }
  // po should track perm * o throughout.
  DenseMatrix want(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += perm(i, k) * o(k, j);
      want(i, j) = s;
    }
  CHECK(max_abs_diff(po, want) < 1e-9);
}
