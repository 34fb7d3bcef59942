#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "swd/errors.hpp"
#include "swd/linalg.hpp"
#include "swd/matrix.hpp"
#include "swd/rng.hpp"

using namespace swd;

namespace {

// Reference splitmix64 + xoshiro256++ (Blackman/Vigna), written straight from
// the published reference code so the RngStream implementation is checked
// against an independent transcription.
struct RefXoshiro {
  std::uint64_t s[4];

  static std::uint64_t splitmix(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  explicit RefXoshiro(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s[i] = splitmix(x);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
};

}  // namespace

TEST_CASE("rng matches the reference xoshiro256++ stream") {
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xdeadbeefull}) {
    RngStream rng(seed);
    RefXoshiro ref(seed);
    for (int i = 0; i < 64; ++i) CHECK(rng.next_u64() == ref.next());
  }
}

TEST_CASE("uniform01 uses the top 53 bits") {
  RngStream rng(7);
  RefXoshiro ref(7);
  for (int i = 0; i < 32; ++i) {
    const double expect =
        static_cast<double>(ref.next() >> 11) * 0x1.0p-53;
    const double got = rng.uniform01();
    CHECK(got == expect);
    CHECK(got >= 0.0);
    CHECK(got < 1.0);
  }
}

TEST_CASE("gaussian is box-muller on two uniforms, cosine branch") {
  RngStream rng(11);
  RefXoshiro ref(11);
  for (int i = 0; i < 16; ++i) {
    const double u1 = static_cast<double>(ref.next() >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(ref.next() >> 11) * 0x1.0p-53;
    const double expect = std::sqrt(-2.0 * std::log(1.0 - u1)) *
                          std::cos(2.0 * 3.14159265358979323846 * u2);
    CHECK(rng.gaussian() == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("gaussian sample moments converge") {
  RngStream rng(3);
  const std::size_t n = 200000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);       // se ~ 1/sqrt(n) = 0.0022
  CHECK(std::abs(var - 1.0) < 0.02);  // se ~ sqrt(2/n) = 0.0032
}

TEST_CASE("derived streams differ from the parent and from each other") {
  RngStream base(5);
  RngStream a = base.derive(1);
  RngStream b = base.derive(2);
  RngStream a2 = base.derive(1);
  CHECK(a.next_u64() == a2.next_u64());  // derive is a pure function
  RngStream base2(5);
  std::vector<std::uint64_t> xs, ys, zs;
  RngStream a3 = base2.derive(1), b3 = base2.derive(2);
  for (int i = 0; i < 8; ++i) {
    xs.push_back(base2.next_u64());
    ys.push_back(a3.next_u64());
    zs.push_back(b3.next_u64());
  }
  CHECK(xs != ys);
  CHECK(ys != zs);
}

TEST_CASE("rng serialize round-trips mid-sequence") {
  RngStream rng(123);
  for (int i = 0; i < 17; ++i) rng.gaussian();  // odd, mid-stream state
  auto bytes = rng.serialize();
  RngStream back = RngStream::deserialize(bytes);
  for (int i = 0; i < 32; ++i) CHECK(rng.next_u64() == back.next_u64());
}

TEST_CASE("rng deserialize rejects a wrong algorithm id") {
  RngStream rng(1);
  auto bytes = rng.serialize();
  bytes[0] ^= 0x20;
  CHECK_THROWS_AS(RngStream::deserialize(bytes), FormatError);
  CHECK_THROWS_AS(RngStream::deserialize({1, 2, 3}), FormatError);
}

TEST_CASE("sample dispatches on distribution") {
  RngStream r1(9), r2(9);
  auto u = sample(r1, Dist::kUniform01, 5);
  auto g = sample(r2, Dist::kGaussian01, 5);
  CHECK(u.size() == 5);
  CHECK(g.size() == 5);
  RngStream r3(9);
  for (int i = 0; i < 5; ++i) CHECK(u[i] == r3.uniform01());
}

TEST_CASE("matrix helpers: identity, transpose, norms") {
  DenseMatrix m(2, 3);
  m(0, 0) = 1; m(0, 1) = 2; m(0, 2) = 3;
  m(1, 0) = 4; m(1, 1) = 5; m(1, 2) = 6;
  DenseMatrix t = transpose(m);
  CHECK(t.rows == 3);
  CHECK(t.cols == 2);
  CHECK(t(2, 1) == 6.0);
  CHECK(fro_norm(identity(4)) == doctest::Approx(2.0));
  CHECK(max_abs_diff(m, m) == 0.0);
  DenseMatrix m2 = m;
  m2(1, 2) = 8.5;
  CHECK(max_abs_diff(m, m2) == doctest::Approx(2.5));

  DenseMatrix bad(1, 1);
  bad(0, 0) = std::nan("");
  CHECK(!all_finite(bad));
  CHECK_THROWS_AS(require_finite(bad, "t"), NonFiniteInput);
}

TEST_CASE("qr reconstructs and orthonormalizes across sizes") {
  RngStream rng(2024);
  for (std::size_t n : {1, 2, 3, 5, 8, 16}) {
    DenseMatrix m = rng.gaussian_matrix(n, n);
    QrResult qr = qr_decompose(m);
    CHECK(orthogonality_drift(qr.q) < 1e-12);
    for (std::size_t j = 0; j < n; ++j) CHECK(qr.r(j, j) > 0.0);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) CHECK(qr.r(i, j) == 0.0);
    // Q * R == M
    DenseMatrix prod(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += qr.q(i, k) * qr.r(k, j);
        prod(i, j) = s;
      }
    CHECK(max_abs_diff(prod, m) < 1e-12);
  }
}

TEST_CASE("qr handles tall matrices and flips signs for negative diagonals") {
  RngStream rng(77);
  DenseMatrix tall = rng.gaussian_matrix(6, 3);
  QrResult qr = qr_decompose(tall);
  CHECK(qr.q.rows == 6);
  CHECK(qr.q.cols == 3);
  CHECK(qr.r.rows == 3);
  CHECK(orthogonality_drift(qr.q) < 1e-12);

  // diag(-2, 3): the unique Q with positive R diagonal is diag(-1, 1).
  DenseMatrix d(2, 2);
  d(0, 0) = -2.0; d(1, 1) = 3.0;
  QrResult qd = qr_decompose(d);
  CHECK(qd.q(0, 0) == doctest::Approx(-1.0));
  CHECK(qd.q(1, 1) == doctest::Approx(1.0));
  CHECK(qd.r(0, 0) == doctest::Approx(2.0));
  CHECK(qd.r(1, 1) == doctest::Approx(3.0));
}

TEST_CASE("qr rejects rank-deficient input naming the column") {
  DenseMatrix m(3, 2);
  m(0, 0) = 1.0; m(1, 0) = 2.0; m(2, 0) = 3.0;
  m(0, 1) = 2.0; m(1, 1) = 4.0; m(2, 1) = 6.0;  // 2x column 0
  try {
    qr_decompose(m);
    CHECK(false);
  } catch (const RankDeficient& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(qr_decompose(DenseMatrix(2, 3)), ShapeError);  // wide
}

TEST_CASE("random_orthogonal is orthogonal with unit determinant magnitude") {
  RngStream rng(31);
  for (std::size_t n : {2, 4, 16}) {
    DenseMatrix o = random_orthogonal(rng, n);
    CHECK(orthogonality_drift(o) < 1e-12);
  }
  // Distinct draws from one stream.
  DenseMatrix o1 = random_orthogonal(rng, 3);
  DenseMatrix o2 = random_orthogonal(rng, 3);
  CHECK(max_abs_diff(o1, o2) > 1e-3);
}

TEST_CASE("jacobi eigendecomposition on a known 2x2") {
  DenseMatrix m(2, 2);
  m(0, 0) = 2.0; m(0, 1) = 1.0;
  m(1, 0) = 1.0; m(1, 1) = 2.0;
  EigResult eig = sym_eig_small(m);
  CHECK(eig.values[0] == doctest::Approx(3.0));
  CHECK(eig.values[1] == doctest::Approx(1.0));
  // eigenvector of lambda=3 is (1,1)/sqrt(2) up to sign
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(eig.vectors(0, 0)) == doctest::Approx(inv_sqrt2));
  CHECK(eig.vectors(0, 0) == doctest::Approx(eig.vectors(1, 0)));
}

TEST_CASE("jacobi reconstructs random symmetric matrices") {
  RngStream rng(13);
  for (std::size_t n : {1, 3, 5, 8}) {
    DenseMatrix g = rng.gaussian_matrix(n, n);
    DenseMatrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (g(i, j) + g(j, i));
    EigResult eig = sym_eig_small(s);
    CHECK(orthogonality_drift(eig.vectors) < 1e-10);
    for (std::size_t i = 0; i + 1 < n; ++i)
      CHECK(eig.values[i] >= eig.values[i + 1]);
    // V diag(w) V^T == S
    DenseMatrix rec(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          acc += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
        rec(i, j) = acc;
      }
    CHECK(max_abs_diff(rec, s) < 1e-9);
  }
  CHECK_THROWS_AS(sym_eig_small(DenseMatrix(9, 9)), TooLarge);
}

TEST_CASE("sqrtm squares back to the input") {
  RngStream rng(17);
  for (std::size_t n : {2, 4, 8}) {
    DenseMatrix g = rng.gaussian_matrix(n, n + 2);
    DenseMatrix s(n, n);  // g g^T / cols, PSD by construction
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n + 2; ++k) acc += g(i, k) * g(j, k);
        s(i, j) = acc / static_cast<double>(n + 2);
      }
    DenseMatrix root = sqrtm_psd(s);
    DenseMatrix sq(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += root(i, k) * root(k, j);
        sq(i, j) = acc;
      }
    CHECK(max_abs_diff(sq, s) < 1e-9);
  }
}

TEST_CASE("sqrtm clamps roundoff negatives and rejects real ones") {
  DenseMatrix tiny(1, 1);
  tiny(0, 0) = -1e-12;
  CHECK(sqrtm_psd(tiny)(0, 0) == 0.0);
  DenseMatrix neg(1, 1);
  neg(0, 0) = -0.5;
  CHECK_THROWS_AS(sqrtm_psd(neg), NotPSD);
}

TEST_CASE("sort_with_ranks is a stable ascending sort") {
  std::vector<double> v = {3.0, 1.0, 2.0, 1.0};
  auto [sorted, perm] = sort_with_ranks(v);
  CHECK(sorted == std::vector<double>{1.0, 1.0, 2.0, 3.0});
  CHECK(perm == std::vector<std::size_t>{1, 3, 2, 0});  // ties keep order
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(sorted[i] == v[perm[i]]);
}
