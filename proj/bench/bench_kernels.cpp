// Times the serial reference kernels against their OpenMP front doors on
// training-shaped inputs and checks the results stay bitwise identical.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "swd/kernels.hpp"
#include "swd/matrix.hpp"
#include "swd/rng.hpp"

using namespace swd;
using Clock = std::chrono::steady_clock;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
  fn();  // warm caches and the OpenMP pool
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
    if (dt.count() < best) best = dt.count();
  }
  return best;
}

bool bitwise_equal(const DenseMatrix& a, const DenseMatrix& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.a.data(), b.a.data(), sizeof(double) * a.a.size()) == 0;
}

struct Row {
  std::string name;
  double serial_ms;
  double parallel_ms;
  bool identical;
};

void report(const std::vector<Row>& rows) {
  std::printf("%-28s %12s %12s %9s %10s\n", "kernel", "serial ms",
              "parallel ms", "speedup", "bitwise");
  for (const Row& r : rows)
    std::printf("%-28s %12.3f %12.3f %8.2fx %10s\n", r.name.c_str(),
                r.serial_ms, r.parallel_ms, r.serial_ms / r.parallel_ms,
                r.identical ? "equal" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 7;
  RngStream rng(99);
  std::vector<Row> rows;

  {
    const std::size_t n = 256;
    DenseMatrix a = rng.gaussian_matrix(n, n);
    DenseMatrix b = rng.gaussian_matrix(n, n);
    DenseMatrix cs(n, n), cp(n, n);
    rows.push_back({"gemm 256x256x256",
                    time_best_of(reps, [&] { kernels::gemm_serial(a, false, b, false, cs); }),
                    time_best_of(reps, [&] { kernels::gemm(a, false, b, false, cp); }),
                    false});
    rows.back().identical = bitwise_equal(cs, cp);
  }

  const std::size_t r = 64, bcols = 4096;
  DenseMatrix wide = rng.gaussian_matrix(r, bcols);

  {
    DenseMatrix ys(r, bcols), yp(r, bcols);
    rows.push_back({"softmax_rows 64x4096",
                    time_best_of(reps, [&] { kernels::softmax_rows_serial(wide, ys); }),
                    time_best_of(reps, [&] { kernels::softmax_rows(wide, yp); }),
                    false});
    rows.back().identical = bitwise_equal(ys, yp);
  }

  {
    DenseMatrix vs(r, 1), vp(r, 1);
    std::vector<std::size_t> is, ip;
    rows.push_back({"row_min 64x4096",
                    time_best_of(reps, [&] { kernels::row_min_serial(wide, vs, is); }),
                    time_best_of(reps, [&] { kernels::row_min(wide, vp, ip); }),
                    false});
    rows.back().identical = bitwise_equal(vs, vp) && is == ip;
  }

  {
    DenseMatrix ss(r, bcols), sp(r, bcols);
    std::vector<std::size_t> is, ip;
    rows.push_back({"sort_rows 64x4096",
                    time_best_of(reps, [&] { kernels::sort_rows_serial(wide, ss, is); }),
                    time_best_of(reps, [&] { kernels::sort_rows(wide, sp, ip); }),
                    false});
    rows.back().identical = bitwise_equal(ss, sp) && is == ip;
  }

  {
    DenseMatrix dst = rng.gaussian_matrix(r, bcols);
    DenseMatrix os(r, bcols), op(r, bcols);
    rows.push_back({"sort_transport_rows 64x4096",
                    time_best_of(reps, [&] { kernels::sort_transport_rows_serial(wide, dst, os); }),
                    time_best_of(reps, [&] { kernels::sort_transport_rows(wide, dst, op); }),
                    false});
    rows.back().identical = bitwise_equal(os, op);
  }

  {
    // Nondecreasing per-row curves, queries in [0, 1]: the CDF shapes the
    // transport block feeds these kernels.
    const std::size_t knots = 33;
    DenseMatrix curve(r, knots);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < knots; ++k) {
        acc += rng.uniform01();
        curve(i, k) = acc;
      }
      for (std::size_t k = 0; k < knots; ++k) curve(i, k) /= acc;
    }
    DenseMatrix q(r, bcols);
    for (auto& v : q.a) v = rng.uniform01();

    DenseMatrix ys(r, bcols), yp(r, bcols);
    std::vector<std::size_t> ss, sp;
    rows.push_back({"interp_eval_rows 64x4096",
                    time_best_of(reps, [&] { kernels::interp_eval_rows_serial(curve, q, ys, ss); }),
                    time_best_of(reps, [&] { kernels::interp_eval_rows(curve, q, yp, sp); }),
                    false});
    rows.back().identical = bitwise_equal(ys, yp) && ss == sp;

    DenseMatrix ts(r, bcols), tp(r, bcols);
    rows.push_back({"interp_inverse_rows 64x4096",
                    time_best_of(reps, [&] { kernels::interp_inverse_rows_serial(curve, q, ts, ss); }),
                    time_best_of(reps, [&] { kernels::interp_inverse_rows(curve, q, tp, sp); }),
                    false});
    rows.back().identical = bitwise_equal(ts, tp) && ss == sp;
  }

  report(rows);
  for (const Row& r2 : rows)
    if (!r2.identical) {
      std::fprintf(stderr, "FAIL: %s parallel result differs\n",
                   r2.name.c_str());
      return 1;
    }
  return 0;
}
