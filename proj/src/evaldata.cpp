#include "swd/evaldata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "swd/errors.hpp"
#include "swd/kernels.hpp"
#include "swd/linalg.hpp"

namespace swd {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDataScale = 0.9;  // keeps every dataset inside [-2,2]^2
}  // namespace

DatasetId parse_dataset(const std::string& name) {
  if (name == "swiss-roll") return DatasetId::kSwissRoll;
  if (name == "ring-8") return DatasetId::kRing8;
  if (name == "grid-25") return DatasetId::kGrid25;
  throw ConfigError("unknown dataset '" + name +
                    "' (expected swiss-roll, ring-8, or grid-25)");
}

const char* dataset_name(DatasetId id) {
  switch (id) {
    case DatasetId::kSwissRoll: return "swiss-roll";
    case DatasetId::kRing8: return "ring-8";
    case DatasetId::kGrid25: return "grid-25";
  }
  return "?";
}

DenseMatrix sample_dataset(DatasetId id, std::size_t n, RngStream& rng,
                           double noise_mult) {
  if (n == 0) throw DomainError("sample_dataset: n must be positive");
  DenseMatrix out(2, n);
  switch (id) {
    case DatasetId::kSwissRoll: {
      // Spiral t in [1.5pi, 4.5pi), radius growing linearly with t.
      const double unit = 2.0 * kDataScale / (4.5 * kPi);
      const double noise = 0.02 * kDataScale * noise_mult;
      for (std::size_t j = 0; j < n; ++j) {
        const double t = 1.5 * kPi * (1.0 + 2.0 * rng.uniform01());
        out(0, j) = t * std::cos(t) * unit + noise * rng.gaussian();
        out(1, j) = t * std::sin(t) * unit + noise * rng.gaussian();
      }
      break;
    }
    case DatasetId::kRing8: {
      const double radius = 2.0 * kDataScale;
      const double noise = 0.02 * kDataScale * noise_mult;
      for (std::size_t j = 0; j < n; ++j) {
        const auto mode = std::min<std::size_t>(
            7, static_cast<std::size_t>(rng.uniform01() * 8.0));
        const double ang = 2.0 * kPi * static_cast<double>(mode) / 8.0;
        out(0, j) = radius * std::cos(ang) + noise * rng.gaussian();
        out(1, j) = radius * std::sin(ang) + noise * rng.gaussian();
      }
      break;
    }
    case DatasetId::kGrid25: {
      const double scale = kDataScale / 2.0;
      const double spacing = 2.0 * scale;
      const double noise = 0.02 * scale * noise_mult;
      for (std::size_t j = 0; j < n; ++j) {
        const auto mode = std::min<std::size_t>(
            24, static_cast<std::size_t>(rng.uniform01() * 25.0));
        const double cx = -2.0 * spacing + spacing * static_cast<double>(mode % 5);
        const double cy = -2.0 * spacing + spacing * static_cast<double>(mode / 5);
        out(0, j) = cx + noise * rng.gaussian();
        out(1, j) = cy + noise * rng.gaussian();
      }
      break;
    }
  }
  return out;
}

GaussianFit gaussian_fit(const DenseMatrix& samples) {
  const std::size_t d = samples.rows, b = samples.cols;
  if (b < 2) throw InsufficientSamples("gaussian_fit: need at least 2 samples");
  require_finite(samples, "gaussian_fit input");
  GaussianFit fit;
  fit.mean.resize(d, 1);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    const double* xi = samples.row(i);
    for (std::size_t j = 0; j < b; ++j) s += xi[j];
    fit.mean(i, 0) = s / static_cast<double>(b);
  }
  fit.cov.resize(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = i; k < d; ++k) {
      double s = 0.0;
      const double* xi = samples.row(i);
      const double* xk = samples.row(k);
      for (std::size_t j = 0; j < b; ++j)
        s += (xi[j] - fit.mean(i, 0)) * (xk[j] - fit.mean(k, 0));
      const double c = s / static_cast<double>(b - 1);
      fit.cov(i, k) = c;
      fit.cov(k, i) = c;
    }
  }
  return fit;
}

double frechet_gaussian(const GaussianFit& a, const GaussianFit& b) {
  const std::size_t d = a.mean.rows;
  if (b.mean.rows != d || a.cov.rows != d || b.cov.rows != d)
    throw ShapeError("frechet_gaussian: dimension mismatch");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a.mean(i, 0) - b.mean(i, 0);
    mean_term += diff * diff;
  }
  const DenseMatrix s1 = sqrtm_psd(a.cov);
  DenseMatrix tmp, inner;
  kernels::gemm(s1, false, b.cov, false, tmp);
  kernels::gemm(tmp, false, s1, false, inner);
  const DenseMatrix cross = sqrtm_psd(inner);
  double trace_term = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    trace_term += a.cov(i, i) + b.cov(i, i) - 2.0 * cross(i, i);
  return std::max(0.0, mean_term + trace_term);
}

double fid_score(const DenseMatrix& generated, const DenseMatrix& reference) {
  if (generated.rows != reference.rows)
    throw ShapeError("fid_score: dimension mismatch");
  return frechet_gaussian(gaussian_fit(generated), gaussian_fit(reference));
}

double hungarian_w1(const DenseMatrix& x, const DenseMatrix& y) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw ShapeError("hungarian_w1: batch shapes differ");
  const std::size_t n = x.cols;
  if (n == 0) throw ShapeError("hungarian_w1: empty batch");
  if (n > 64)
    throw TooLarge("hungarian_w1: batch " + std::to_string(n) + " > 64");
  require_finite(x, "hungarian x");
  require_finite(y, "hungarian y");

  DenseMatrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < x.rows; ++d) {
        const double diff = x(d, i) - y(d, j);
        s += diff * diff;
      }
      cost(i, j) = std::sqrt(s);
    }

  // Shortest-augmenting-path assignment with row/column potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);  // column -> row (1-based)
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j)
    if (match[j] != 0) total += cost(match[j] - 1, j - 1);
  return total / static_cast<double>(n);
}

SurfaceGrid value_surface(
    std::size_t g,
    const std::function<std::vector<double>(const DenseMatrix&)>& field,
    double lo, double hi) {
  if (g < 2) throw DomainError("value_surface: grid must be at least 2x2");
  if (!(lo < hi)) throw DomainError("value_surface: need lo < hi");
  SurfaceGrid grid;
  grid.g = g;
  grid.xs.resize(g);
  grid.ys.resize(g);
  const double step = (hi - lo) / static_cast<double>(g - 1);
  for (std::size_t i = 0; i < g; ++i) {
    grid.xs[i] = lo + step * static_cast<double>(i);
    grid.ys[i] = lo + step * static_cast<double>(i);
  }
  DenseMatrix pts(2, g * g);
  for (std::size_t iy = 0; iy < g; ++iy)
    for (std::size_t ix = 0; ix < g; ++ix) {
      pts(0, iy * g + ix) = grid.xs[ix];
      pts(1, iy * g + ix) = grid.ys[iy];
    }
  grid.values = field(pts);
  if (grid.values.size() != g * g)
    throw ShapeError("value_surface: field returned wrong count");
  return grid;
}

}  // namespace swd
