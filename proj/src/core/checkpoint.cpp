#include "fgdc/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <cctype>

namespace fgdc {
namespace {

constexpr char kMagic[4] = {'F', 'G', 'D', 'C'};

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open checkpoint for writing: " + path.string());
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) {
    v = to_little(v);
    bytes(&v, 4);
  }
  void f32(float v) {
    v = to_little(v);
    bytes(&v, 4);
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw DataError("failed writing checkpoint " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot open checkpoint: " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw DataError("truncated checkpoint: " + path_.string());
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return to_little(v);
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return to_little(v);
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(data.tensors.size() + data.metadata.size()));
  for (const auto& [key, text] : data.metadata) {
    const std::string name = "#" + key + text;
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    for (int i = 0; i < 4; ++i) w.u32(0);
  }
  for (const auto& [name, t] : data.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    const Shape s = t.shape();
    w.u32(s.n);
    w.u32(s.c);
    w.u32(s.h);
    w.u32(s.w);
    for (float v : t.data()) w.f32(v);
  }
  w.finish(path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint (bad magic): " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  CheckpointData data;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = r.u32();
    if (len > (1u << 20)) throw DataError("corrupt checkpoint entry name length");
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (!name.empty() && name[0] == '#') {
      // Metadata keys are the leading identifier characters.
      std::size_t k = 1;
      while (k < name.size() && (std::isalnum(static_cast<unsigned char>(name[k])) || name[k] == '_')) ++k;
      data.metadata[name.substr(1, k - 1)] = name.substr(k);
      continue;
    }
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (1ull << 31))
      throw DataError("corrupt checkpoint extents for " + name);
    std::vector<float> values(s.numel());
    for (auto& v : values) v = r.f32();
    data.tensors.emplace(name, Tensor<float>(s, std::move(values)));
  }
  if (!r.at_end()) throw DataError("trailing bytes in checkpoint " + path.string());
  return data;
}

template <typename T>
CheckpointData to_checkpoint(const ParameterStore<T>& store) {
  CheckpointData data;
  for (const auto& p : store.all()) data.tensors.emplace(p.name, p.value.template cast<float>());
  return data;
}

template <typename T>
void load_parameters(const CheckpointData& data, ParameterStore<T>& store) {
  for (auto& p : store.all()) {
    auto it = data.tensors.find(p.name);
    if (it == data.tensors.end()) throw DataError("checkpoint lacks parameter " + p.name);
    if (!(it->second.shape() == p.value.shape()))
      throw DataError("checkpoint parameter " + p.name + " has extents " +
                      it->second.shape().str() + ", model expects " +
                      p.value.shape().str());
    p.value = it->second.template cast<T>();
  }
}

template CheckpointData to_checkpoint(const ParameterStore<float>&);
template CheckpointData to_checkpoint(const ParameterStore<double>&);
template void load_parameters(const CheckpointData&, ParameterStore<float>&);
template void load_parameters(const CheckpointData&, ParameterStore<double>&);

}  // namespace fgdc
