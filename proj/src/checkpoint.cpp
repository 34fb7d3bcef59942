#include "swd/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "swd/errors.hpp"

namespace swd {

namespace {

constexpr char kMagic[4] = {'S', 'W', 'D', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t off = 0;

  void need(std::size_t n, const char* what) {
    if (off + n > buf.size())
      throw FormatError("checkpoint truncated at offset " +
                        std::to_string(off) + ": expected " + what);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(buf[off] | (buf[off + 1] << 8));
    off += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(buf[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
};

}  // namespace

void write_checkpoint(const std::string& path,
                      const std::vector<NamedArray>& arrays) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    if (a.name.size() > 0xffff)
      throw FormatError("checkpoint: array name too long");
    if (a.dims.size() > 0xff)
      throw FormatError("checkpoint: too many dimensions");
    std::size_t count = 1;
    for (std::size_t d : a.dims) count *= d;
    if (count != a.data.size())
      throw FormatError("checkpoint: dims of '" + a.name +
                        "' disagree with data size");
    put_u16(out, static_cast<std::uint16_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    out.push_back(static_cast<std::uint8_t>(a.dims.size()));
    for (std::size_t d : a.dims) put_u64(out, d);
    for (double v : a.data) put_f64(out, v);
  }

  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw FormatError("checkpoint: cannot open " + tmp + " for writing");
  const bool ok =
      out.empty() || std::fwrite(out.data(), 1, out.size(), f) == out.size();
  const bool closed = std::fclose(f) == 0;
  if (!ok || !closed) throw FormatError("checkpoint: short write to " + tmp);
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FormatError("checkpoint: cannot move " + tmp + " into place");
}

std::vector<NamedArray> read_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> buf;
  std::uint8_t chunk[65536];
  std::size_t got;
  while ((got = std::fread(chunk, 1, sizeof chunk, f)) > 0)
    buf.insert(buf.end(), chunk, chunk + got);
  std::fclose(f);

  Reader r{buf};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic at offset 0");
  r.off = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version) + " at offset 4");
  const std::uint32_t count = r.u32("array count");

  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const std::uint16_t name_len = r.u16("name length");
    r.need(name_len, "array name");
    a.name.assign(reinterpret_cast<const char*>(buf.data() + r.off), name_len);
    r.off += name_len;
    r.need(1, "rank");
    const std::uint8_t ndim = buf[r.off++];
    std::size_t total = 1;
    a.dims.resize(ndim);
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const std::uint64_t dim = r.u64("dimension");
      a.dims[d] = static_cast<std::size_t>(dim);
      if (dim != 0 && total > (1u << 30) / dim)
        throw FormatError("checkpoint: array '" + a.name +
                          "' implausibly large at offset " +
                          std::to_string(r.off));
      total *= static_cast<std::size_t>(dim);
    }
    a.data.resize(total);
    for (std::size_t k = 0; k < total; ++k) a.data[k] = r.f64("array data");
    arrays.push_back(std::move(a));
  }
  return arrays;
}

NamedArray array_from_matrix(std::string name, const DenseMatrix& m) {
  NamedArray a;
  a.name = std::move(name);
  a.dims = {m.rows, m.cols};
  a.data = m.a;
  return a;
}

DenseMatrix matrix_from_array(const NamedArray& a) {
  if (a.dims.size() != 2)
    throw FormatError("checkpoint: array '" + a.name + "' is not 2-d");
  DenseMatrix m(a.dims[0], a.dims[1]);
  m.a = a.data;
  return m;
}

NamedArray array_from_scalar(std::string name, double v) {
  NamedArray a;
  a.name = std::move(name);
  a.dims = {1};
  a.data = {v};
  return a;
}

double scalar_from_array(const NamedArray& a) {
  if (a.data.size() != 1)
    throw FormatError("checkpoint: array '" + a.name + "' is not a scalar");
  return a.data[0];
}

NamedArray array_from_bytes(std::string name,
                            const std::vector<std::uint8_t>& bytes) {
  NamedArray a;
  a.name = std::move(name);
  a.dims = {bytes.size()};
  a.data.reserve(bytes.size());
  for (std::uint8_t b : bytes) a.data.push_back(static_cast<double>(b));
  return a;
}

std::vector<std::uint8_t> bytes_from_array(const NamedArray& a) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(a.data.size());
  for (double v : a.data) {
    if (v < 0.0 || v > 255.0 || v != static_cast<double>(static_cast<int>(v)))
      throw FormatError("checkpoint: array '" + a.name +
                        "' does not hold byte values");
    bytes.push_back(static_cast<std::uint8_t>(v));
  }
  return bytes;
}

}  // namespace swd
