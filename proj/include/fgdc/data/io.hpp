#pragma once

#include <filesystem>

#include "fgdc/core/tensor.hpp"

namespace fgdc {

// 8-bit PNG (gray, gray+alpha, RGB, RGBA) or binary PPM (P6, maxval 255),
// detected from the leading bytes. Returns 1x3xHxW in [0, 1]; gray images are
// replicated over the three channels and alpha is dropped.
Tensor<float> read_image(const std::filesystem::path& path);

// Writes the first sample of a 3-channel (or 1-channel, replicated) tensor.
// Format follows the extension: .png or .ppm. Values are clamped to [0, 1]
// and rounded to 8 bits.
void write_image(const Tensor<float>& image, const std::filesystem::path& path);

constexpr float kFloTag = 202021.25f;

// Middlebury .flo: float tag, i32 width, i32 height, then interleaved (u, v)
// float32 rows, all little-endian. Returns 1x2xHxW.
Tensor<float> read_flo(const std::filesystem::path& path);
void write_flo(const Tensor<float>& flow, const std::filesystem::path& path);

}  // namespace fgdc
