#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swd/matrix.hpp"

namespace swd {

// Checkpoint container: named f64 arrays in one little-endian file.
//
//   "SWD1"  u32 version(=1)  u32 array_count
//   per array: u16 name_len, name bytes, u8 ndim, ndim x u64 dims,
//              prod(dims) x f64, row-major.
//
// Non-numeric payloads (rng state, config text) ride along as byte arrays
// widened to one byte per f64 slot; wasteful but keeps the reader trivial.

struct NamedArray {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<double> data;
};

void write_checkpoint(const std::string& path,
                      const std::vector<NamedArray>& arrays);

// FormatError on bad magic, version, or truncation; messages carry the byte
// offset of the failure.
std::vector<NamedArray> read_checkpoint(const std::string& path);

NamedArray array_from_matrix(std::string name, const DenseMatrix& m);
DenseMatrix matrix_from_array(const NamedArray& a);  // requires ndim == 2

NamedArray array_from_scalar(std::string name, double v);
double scalar_from_array(const NamedArray& a);

NamedArray array_from_bytes(std::string name,
                            const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> bytes_from_array(const NamedArray& a);

}  // namespace swd
