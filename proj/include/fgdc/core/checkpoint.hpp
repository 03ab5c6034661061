#pragma once

// Binary checkpoint container.
//
//   "FGDC"                     4 magic bytes
//   u32 version                currently 1
//   u32 entry count
//   per entry:
//     u32 name length, UTF-8 name bytes
//     u32 n, c, h, w           extents
//     n*c*h*w float32          little-endian scalars, NCHW order
//
// All integers are little-endian. An entry whose name starts with '#' is
// metadata: its extents are all zero and the text after '#' is the payload
// (the model config is stored as "#config" + JSON).

#include <filesystem>
#include <map>
#include <string>

#include "fgdc/core/parameters.hpp"

namespace fgdc {

struct CheckpointData {
  std::map<std::string, Tensor<float>> tensors;
  std::map<std::string, std::string> metadata;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

template <typename T>
CheckpointData to_checkpoint(const ParameterStore<T>& store);

// Copies every store parameter from the checkpoint; names and extents must
// match exactly.
template <typename T>
void load_parameters(const CheckpointData& data, ParameterStore<T>& store);

}  // namespace fgdc
