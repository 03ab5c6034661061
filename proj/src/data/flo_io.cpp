#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "fgdc/data/io.hpp"

namespace fgdc {
namespace {

template <typename U>
U little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    std::reverse(b, b + sizeof(U));
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

}  // namespace

Tensor<float> read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  float tag = 0;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&tag), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in) throw DataError("truncated .flo header: " + path.string());
  if (little(tag) != kFloTag) throw DataError("bad .flo magic in " + path.string());
  w = little(w);
  h = little(h);
  if (w <= 0 || h <= 0 || static_cast<std::int64_t>(w) * h > (1LL << 28))
    throw DataError("implausible .flo extents in " + path.string());
  const std::size_t P = static_cast<std::size_t>(w) * h;
  std::vector<float> raw(2 * P);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != raw.size() * 4)
    throw DataError(".flo payload shorter than " + std::to_string(w) + "x" +
                    std::to_string(h) + ": " + path.string());
  in.peek();
  if (!in.eof()) throw DataError(".flo payload longer than its header declares: " + path.string());
  Tensor<float> flow({1, 2, h, w});
  auto d = flow.mutable_data();
  for (std::size_t p = 0; p < P; ++p) {
    d[p] = little(raw[2 * p]);
    d[P + p] = little(raw[2 * p + 1]);
  }
  return flow;
}

void write_flo(const Tensor<float>& flow, const std::filesystem::path& path) {
  const Shape s = flow.shape();
  require(s.n == 1 && s.c == 2, "write_flo expects a 1x2xHxW flow, got " + s.str());
  const std::size_t P = s.plane();
  std::vector<float> raw(2 * P);
  for (std::size_t p = 0; p < P; ++p) {
    raw[2 * p] = little(flow.data()[p]);
    raw[2 * p + 1] = little(flow.data()[P + p]);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const float tag = little(kFloTag);
  const std::int32_t w = little(static_cast<std::int32_t>(s.w));
  const std::int32_t h = little(static_cast<std::int32_t>(s.h));
  out.write(reinterpret_cast<const char*>(&tag), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace fgdc
