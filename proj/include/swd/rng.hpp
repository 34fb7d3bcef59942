#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swd/matrix.hpp"

namespace swd {

// Deterministic 64-bit PRNG: xoshiro256++ seeded through splitmix64.
//
// The generator is pinned to this exact algorithm (not std::mt19937 +
// std::normal_distribution, whose outputs are not portable across standard
// library implementations) because checkpoints and golden tests require the
// same (algorithm-id, seed) to reproduce the identical sequence everywhere.
//
// uniform01() maps the top 53 bits to [0, 1). gaussian() applies the
// Box-Muller transform to one fresh pair of uniforms and returns the cosine
// branch only, so every gaussian draw consumes exactly two uniforms and the
// serialized state stays a plain tuple of words.
class RngStream {
 public:
  static constexpr const char* kAlgorithmId = "xoshiro256pp-bm1";

  explicit RngStream(std::uint64_t seed);

  // Independent child stream; children with distinct ids do not overlap in
  // any practical sense (seeded through a second splitmix64 pass).
  RngStream derive(std::uint64_t stream_id) const;

  std::uint64_t next_u64();
  double uniform01();
  double gaussian();

  std::vector<double> sample_uniform01(std::size_t n);
  std::vector<double> sample_gaussian(std::size_t n);

  void fill_gaussian(DenseMatrix& m);
  DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols);

  // "<algorithm-id>\0" + seed + 4 state words, all little-endian u64.
  std::vector<std::uint8_t> serialize() const;
  static RngStream deserialize(const std::vector<std::uint8_t>& bytes);

  std::uint64_t seed() const { return seed_; }

 private:
  RngStream() = default;
  std::uint64_t seed_ = 0;
  std::uint64_t s_[4] = {0, 0, 0, 0};
};

enum class Dist { kUniform01, kGaussian01 };

std::vector<double> sample(RngStream& stream, Dist dist, std::size_t n);

}  // namespace swd
