#include "fgdc/model/warp.hpp"

#include <cmath>
#include <string>

namespace fgdc {

template <typename T>
Var<T> backward_warp(const Var<T>& feature, const Var<T>& flow) {
  const Tensor<T> fv = feature.value();
  const Tensor<T> wv = flow.value();
  Tensor<T> out = kernels::backward_warp(fv, wv);
  return feature.tape().record(
      std::move(out), {feature, flow},
      [fv, wv](std::span<const T> g, std::span<T* const> gin) {
        kernels::backward_warp_backward(
            fv, wv, g, gin[0] ? std::span<T>(gin[0], fv.numel()) : std::span<T>(),
            gin[1] ? std::span<T>(gin[1], wv.numel()) : std::span<T>());
      });
}

template <typename T>
Var<T> occlusion_blend(const Var<T>& f0, const Var<T>& f1, const Var<T>& mask) {
  const Shape s = f0.shape();
  require(f1.shape() == s, "occlusion_blend: feature shapes differ " + s.str() +
                               " vs " + f1.shape().str());
  require(mask.shape() == s.with_channels(1),
          "occlusion_blend: mask " + mask.shape().str() +
              " does not broadcast over " + s.str());
  const Tensor<T> a = f0.value(), b = f1.value(), m = mask.value();
  Tensor<T> out(s);
  auto o = out.mutable_data();
  const std::size_t P = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * P;
      const T* mp = m.data().data() + static_cast<std::size_t>(n) * P;
      for (std::size_t p = 0; p < P; ++p)
        o[base + p] = mp[p] * a.data()[base + p] + (T(1) - mp[p]) * b.data()[base + p];
    }
  return f0.tape().record(
      std::move(out), {f0, f1, mask},
      [a, b, m, s, P](std::span<const T> g, std::span<T* const> gin) {
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * P;
            const std::size_t mb = static_cast<std::size_t>(n) * P;
            for (std::size_t p = 0; p < P; ++p) {
              const T gp = g[base + p];
              const T mv = m.data()[mb + p];
              if (gin[0]) gin[0][base + p] += gp * mv;
              if (gin[1]) gin[1][base + p] += gp * (T(1) - mv);
              if (gin[2]) gin[2][mb + p] += gp * (a.data()[base + p] - b.data()[base + p]);
            }
          }
      });
}

int scaled_extent(int extent, double factor) {
  if (!(factor > 0.0))
    throw std::invalid_argument("scale factor must be positive, got " +
                                std::to_string(factor));
  const long v = std::lround(extent * factor);
  require(v >= 1, "scaled extent collapses to zero");
  return static_cast<int>(v);
}

template <typename T>
Var<T> scale_flow(const Var<T>& flow, double factor) {
  const Shape s = flow.shape();
  require(s.c == 2, "scale_flow expects a 2-channel flow, got " + s.str());
  const int h = scaled_extent(s.h, factor);
  const int w = scaled_extent(s.w, factor);
  if (factor == 1.0) return flow;
  return scale(resize_bilinear(flow, h, w), static_cast<T>(factor));
}

#define FGDC_INSTANTIATE(T)                                                     \
  template Var<T> backward_warp(const Var<T>&, const Var<T>&);                  \
  template Var<T> occlusion_blend(const Var<T>&, const Var<T>&, const Var<T>&); \
  template Var<T> scale_flow(const Var<T>&, double);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)

}  // namespace fgdc
