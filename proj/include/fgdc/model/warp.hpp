#pragma once

#include "fgdc/core/ops.hpp"

namespace fgdc {

// out(p) = feature sampled bilinearly at p + flow(p), coordinates clamped to
// the border. flow channel 0 is x (rightward), channel 1 is y (downward).
template <typename T>
Var<T> backward_warp(const Var<T>& feature, const Var<T>& flow);

// mask * f0 + (1 - mask) * f1 with a 1-channel mask broadcast over channels.
template <typename T>
Var<T> occlusion_blend(const Var<T>& f0, const Var<T>& f1, const Var<T>& mask);

// Resizes a flow by `factor` and multiplies its displacements by the same
// factor. Output extents are round(extent * factor).
template <typename T>
Var<T> scale_flow(const Var<T>& flow, double factor);

// Resizes any field to the given extents (no value scaling).
template <typename T>
Var<T> resize_to(const Var<T>& x, int h, int w) {
  return resize_bilinear(x, h, w);
}

int scaled_extent(int extent, double factor);

}  // namespace fgdc
