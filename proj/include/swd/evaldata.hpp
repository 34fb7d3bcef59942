#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "swd/matrix.hpp"
#include "swd/rng.hpp"

namespace swd {

// Planar toy datasets, all contained in [-2, 2]^2, samples as columns.
enum class DatasetId { kSwissRoll, kRing8, kGrid25 };

DatasetId parse_dataset(const std::string& name);  // ConfigError if unknown
const char* dataset_name(DatasetId id);

// noise_mult scales the per-dataset jitter (1 = nominal, 0 = exact manifold;
// the draw sequence is identical either way, so runs stay comparable).
DenseMatrix sample_dataset(DatasetId id, std::size_t n, RngStream& rng,
                           double noise_mult = 1.0);

// Sample mean and unbiased covariance of d x b columns (b >= 2).
struct GaussianFit {
  DenseMatrix mean;  // d x 1
  DenseMatrix cov;   // d x d
};
GaussianFit gaussian_fit(const DenseMatrix& samples);

// Squared 2-Wasserstein distance between Gaussians:
// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
double frechet_gaussian(const GaussianFit& a, const GaussianFit& b);

// Gaussian-moment score between two sample batches (columns, equal dim).
double fid_score(const DenseMatrix& generated, const DenseMatrix& reference);

// Exact 1-Wasserstein between equal-size point sets under Euclidean cost:
// optimal assignment total / b. Cubic algorithm, b <= 64 (TooLarge beyond).
double hungarian_w1(const DenseMatrix& x, const DenseMatrix& y);

// Scalar field sampled on a g x g lattice spanning [lo, hi]^2 (g >= 2,
// lo < hi). The callback receives all lattice points as a 2 x g^2 matrix
// (x fastest) and returns one value per column.
struct SurfaceGrid {
  std::size_t g = 0;
  std::vector<double> xs;      // g axis values
  std::vector<double> ys;      // g axis values
  std::vector<double> values;  // row-major over (y, x), size g^2
};
SurfaceGrid value_surface(
    std::size_t g,
    const std::function<std::vector<double>(const DenseMatrix&)>& field,
    double lo = -2.0, double hi = 2.0);

}  // namespace swd
