#include "swd/rng.hpp"

#include <cmath>
#include <cstring>

#include "swd/errors.hpp"

namespace swd {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[off + i]) << (8 * i);
  return v;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

RngStream RngStream::derive(std::uint64_t stream_id) const {
  std::uint64_t x = seed_;
  std::uint64_t h = splitmix64(x);
  x = h ^ (stream_id * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  return RngStream(splitmix64(x));
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::gaussian() {
  // One pair of uniforms per draw; the sine branch is discarded so the
  // consumed-word count per gaussian is a constant (keeps resume exact).
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log1p(-u1));
  return radius * std::cos(kTwoPi * u2);
}

std::vector<double> RngStream::sample_uniform01(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform01();
  return out;
}

std::vector<double> RngStream::sample_gaussian(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = gaussian();
  return out;
}

void RngStream::fill_gaussian(DenseMatrix& m) {
  for (auto& v : m.a) v = gaussian();
}

DenseMatrix RngStream::gaussian_matrix(std::size_t rows, std::size_t cols) {
  DenseMatrix m(rows, cols);
  fill_gaussian(m);
  return m;
}

std::vector<std::uint8_t> RngStream::serialize() const {
  std::vector<std::uint8_t> out;
  const char* id = kAlgorithmId;
  out.insert(out.end(), id, id + std::strlen(id));
  out.push_back(0);
  put_u64(out, seed_);
  for (const auto& w : s_) put_u64(out, w);
  return out;
}

RngStream RngStream::deserialize(const std::vector<std::uint8_t>& bytes) {
  const std::size_t id_len = std::strlen(kAlgorithmId);
  if (bytes.size() != id_len + 1 + 5 * 8)
    throw FormatError("rng state: expected " + std::to_string(id_len + 41) +
                      " bytes, got " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kAlgorithmId, id_len) != 0 || bytes[id_len] != 0)
    throw FormatError("rng state: unknown algorithm id");
  RngStream r;
  std::size_t off = id_len + 1;
  r.seed_ = get_u64(bytes, off);
  off += 8;
  for (auto& w : r.s_) {
    w = get_u64(bytes, off);
    off += 8;
  }
  return r;
}

std::vector<double> sample(RngStream& stream, Dist dist, std::size_t n) {
  switch (dist) {
    case Dist::kUniform01:
      return stream.sample_uniform01(n);
    case Dist::kGaussian01:
      return stream.sample_gaussian(n);
  }
  throw DomainError("sample: unknown distribution");
}

}  // namespace swd
