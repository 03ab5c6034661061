#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fgdc/core/tape.hpp"
#include "fgdc/kernels/kernels.hpp"

namespace fgdc {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight,
              const std::optional<Var<T>>& bias, const ConvOptions& opt);

enum class ElementwiseKind { kAdd, kSub, kMul, kRelu, kSigmoid, kTanh, kScale };

// Dispatcher over the pointwise family. Binary kinds take `b` (equal shape);
// kScale takes `scalar`.
template <typename T>
Var<T> elementwise(ElementwiseKind kind, const Var<T>& a,
                   const std::optional<Var<T>>& b = std::nullopt, T scalar = T(1));

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> abs(const Var<T>& a);
// Gradient passes where lo <= a <= hi.
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

// Align-corners-false bilinear resampling.
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_channels(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_channels<T>(std::span<const Var<T>>(v));
}
template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count);

// Scalar reductions, shape 1x1x1x1.
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
// mean(|a - b|) fused.
template <typename T> Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);
// sum(a * weights) for a constant weight tensor; used to project outputs.
template <typename T> Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& weights);

}  // namespace fgdc
