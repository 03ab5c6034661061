#pragma once

// Sliding-window and sampling kernels on raw tensors.
//
// fgdc::kernels holds the OpenMP versions used by the differentiable ops.
// fgdc::reference holds plain serial loops with the same contracts; they are
// kept for equivalence tests and the kernel benchmark.
//
// Backward entry points accumulate (+=) into the gradient spans they are
// given; an empty span means that gradient is not wanted.

#include <span>

#include "fgdc/core/tensor.hpp"

namespace fgdc {

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Deformable convolution is always stride 1 with "same" padding (kernel / 2).
// A kernel tap whose undisplaced position falls in the padding ring reads zero,
// as in conv2d; every other tap samples bilinearly with border clamp.
struct DeformOptions {
  int kernel = 3;
  int offset_groups = 1;
};

// Output extent of a convolution; throws ShapeError when the window does not
// tile the padded input exactly or the result would be empty.
int conv_out_extent(int in, int kernel, int stride, int padding);

Shape conv_out_shape(const Shape& x, const Shape& w, const ConvOptions& opt);
void check_deform_shapes(const Shape& x, const Shape& w, const Shape& offsets,
                         const Shape& mods, const Shape* base_flow,
                         const DeformOptions& opt);

namespace kernels {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvOptions& opt);
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                     std::span<const T> gy, const ConvOptions& opt,
                     std::span<T> gx, std::span<T> gw, std::span<T> gb);

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
void resize_bilinear_backward(const Shape& in, int out_h, int out_w,
                              std::span<const T> gy, std::span<T> gx);

template <typename T>
Tensor<T> backward_warp(const Tensor<T>& feature, const Tensor<T>& flow);
template <typename T>
void backward_warp_backward(const Tensor<T>& feature, const Tensor<T>& flow,
                            std::span<const T> gy, std::span<T> gfeature,
                            std::span<T> gflow);

template <typename T>
Tensor<T> correlation(const Tensor<T>& ft, const Tensor<T>& fw, int radius);
template <typename T>
void correlation_backward(const Tensor<T>& ft, const Tensor<T>& fw, int radius,
                          std::span<const T> gy, std::span<T> gft,
                          std::span<T> gfw);

template <typename T>
Tensor<T> deform_conv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, const Tensor<T>& offsets,
                      const Tensor<T>& mods, const Tensor<T>* base_flow,
                      const DeformOptions& opt);
template <typename T>
void deform_conv_backward(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& offsets, const Tensor<T>& mods,
                          const Tensor<T>* base_flow, const DeformOptions& opt,
                          std::span<const T> gy, std::span<T> gx,
                          std::span<T> gw, std::span<T> gb,
                          std::span<T> goffsets, std::span<T> gmods,
                          std::span<T> gflow);

}  // namespace kernels

namespace reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvOptions& opt);
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                     std::span<const T> gy, const ConvOptions& opt,
                     std::span<T> gx, std::span<T> gw, std::span<T> gb);

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
void resize_bilinear_backward(const Shape& in, int out_h, int out_w,
                              std::span<const T> gy, std::span<T> gx);

template <typename T>
Tensor<T> backward_warp(const Tensor<T>& feature, const Tensor<T>& flow);
template <typename T>
void backward_warp_backward(const Tensor<T>& feature, const Tensor<T>& flow,
                            std::span<const T> gy, std::span<T> gfeature,
                            std::span<T> gflow);

template <typename T>
Tensor<T> correlation(const Tensor<T>& ft, const Tensor<T>& fw, int radius);
template <typename T>
void correlation_backward(const Tensor<T>& ft, const Tensor<T>& fw, int radius,
                          std::span<const T> gy, std::span<T> gft,
                          std::span<T> gfw);

template <typename T>
Tensor<T> deform_conv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, const Tensor<T>& offsets,
                      const Tensor<T>& mods, const Tensor<T>* base_flow,
                      const DeformOptions& opt);
template <typename T>
void deform_conv_backward(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& offsets, const Tensor<T>& mods,
                          const Tensor<T>* base_flow, const DeformOptions& opt,
                          std::span<const T> gy, std::span<T> gx,
                          std::span<T> gw, std::span<T> gb,
                          std::span<T> goffsets, std::span<T> gmods,
                          std::span<T> gflow);

}  // namespace reference
}  // namespace fgdc
