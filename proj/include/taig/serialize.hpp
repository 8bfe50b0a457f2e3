#ifndef TAIG_SERIALIZE_HPP
#define TAIG_SERIALIZE_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "taig/net.hpp"

namespace taig {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model file layout, all integers little-endian:
//   magic "TAIGNET1"
//   u32 arch length, arch bytes (UTF-8)
//   u32 ndim, u32 dims...
//   u32 K
//   per parameter tensor in layer order: u64 count, f64 data
namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<char*>(b), 8);
}
inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}

struct Reader {
  std::istream& is;
  std::uint64_t offset = 0;
  void read(char* dst, std::size_t n, const char* field) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw FormatError("truncated model file reading " + std::string(field) +
                        " at byte offset " + std::to_string(offset));
    offset += n;
  }
  std::uint32_t u32(const char* field) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* field) {
    unsigned char b[8];
    read(reinterpret_cast<char*>(b), 8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }
  double f64(const char* field) {
    std::uint64_t u = u64(field);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
};

template <typename Fn>
void for_each_param(ReluNet& net, Fn&& fn) {
  for (auto& layer : net.layers) {
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      fn(a->W);
      fn(a->b);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      fn(c->W);
      fn(c->b);
    }
  }
}
template <typename Fn>
void for_each_param(const ReluNet& net, Fn&& fn) {
  for_each_param(const_cast<ReluNet&>(net), [&](Tensor& t) { fn(std::as_const(t)); });
}

}  // namespace detail

/// Atomic write: temp file in the same directory, then rename.
inline void save(const ReluNet& net, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    os.write("TAIGNET1", 8);
    detail::put_u32(os, static_cast<std::uint32_t>(net.arch.size()));
    os.write(net.arch.data(), static_cast<std::streamsize>(net.arch.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(net.input_shape.size()));
    for (auto d : net.input_shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
    detail::put_u32(os, static_cast<std::uint32_t>(net.num_classes));
    detail::for_each_param(net, [&](const Tensor& t) {
      detail::put_u64(os, t.size());
      for (double v : t.data) detail::put_f64(os, v);
    });
    if (!os) throw FormatError("write failure on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline ReluNet load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  detail::Reader r{is};
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, "TAIGNET1", 8) != 0)
    throw FormatError("bad magic in " + path.string() + " (expected TAIGNET1)");
  std::uint32_t arch_len = r.u32("arch length");
  if (arch_len > 4096) throw FormatError("implausible arch length field");
  std::string arch(arch_len, '\0');
  r.read(arch.data(), arch_len, "arch");
  std::uint32_t ndim = r.u32("input ndim");
  if (ndim == 0 || ndim > 8) throw FormatError("implausible input ndim field");
  std::vector<std::size_t> shape(ndim);
  for (auto& d : shape) d = r.u32("input dim");
  std::uint32_t k = r.u32("class count");
  if (k < 2) throw FormatError("class count field K=" + std::to_string(k) + " violates K >= 2");
  ReluNet net = build_net(arch, shape, k);
  detail::for_each_param(net, [&](Tensor& t) {
    std::uint64_t n = r.u64("param count");
    if (n != t.size())
      throw FormatError("param count field " + std::to_string(n) + " does not match arch (" +
                        std::to_string(t.size()) + " expected)");
    for (auto& v : t.data) v = r.f64("param value");
  });
  return net;
}

}  // namespace taig

#endif
