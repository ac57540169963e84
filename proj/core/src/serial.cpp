#include "ttsfe/serial.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace ttsfe {

namespace {

constexpr char kMagic[4] = {'U', 'F', 'T', '1'};

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  v = byteswap_if_big(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw SerialError("unexpected end of stream reading u32");
  return byteswap_if_big(v);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  bits = byteswap_if_big(bits);
  out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
}

double read_f64(std::istream& in) {
  std::uint64_t bits = 0;
  in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
  if (!in) throw SerialError("unexpected end of stream reading f64");
  bits = byteswap_if_big(bits);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) write_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw SerialError("bad tensor magic (expected UFT1)");
  }
  std::uint32_t rank = read_u32(in);
  if (rank > 8) throw SerialError("implausible tensor rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = read_u32(in);
    if (d == 0) throw SerialError("zero dimension in tensor header");
    n *= d;
  }
  std::vector<double> data(n);
  for (auto& v : data) v = read_f64(in);
  return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace ttsfe
