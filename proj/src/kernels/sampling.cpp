#include <vector>

#include "fgdc/kernels/bilinear.hpp"
#include "fgdc/kernels/kernels.hpp"

namespace fgdc::kernels {

using detail::BilinearTap;
using detail::ResizeTap;

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize target must be at least 1x1");
  const Shape xs = x.shape();
  Tensor<T> y({xs.n, xs.c, out_h, out_w});
  std::vector<ResizeTap<T>> rows(out_h), cols(out_w);
  for (int i = 0; i < out_h; ++i) rows[i] = ResizeTap<T>::at(i, xs.h, out_h);
  for (int j = 0; j < out_w; ++j) cols[j] = ResizeTap<T>::at(j, xs.w, out_w);

  const T* xp = x.data().data();
  T* yp = y.mutable_data().data();
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const T* src = xp + static_cast<std::size_t>(pl) * xs.plane();
    T* dst = yp + static_cast<std::size_t>(pl) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      const auto& r = rows[i];
      const T* a = src + r.i0 * xs.w;
      const T* b = src + r.i1 * xs.w;
      for (int j = 0; j < out_w; ++j) {
        const auto& c = cols[j];
        const T top = (T(1) - c.lambda) * a[c.i0] + c.lambda * a[c.i1];
        const T bot = (T(1) - c.lambda) * b[c.i0] + c.lambda * b[c.i1];
        dst[i * out_w + j] = (T(1) - r.lambda) * top + r.lambda * bot;
      }
    }
  }
  return y;
}

template <typename T>
void resize_bilinear_backward(const Shape& in, int out_h, int out_w,
                              std::span<const T> gy, std::span<T> gx) {
  std::vector<ResizeTap<T>> rows(out_h), cols(out_w);
  for (int i = 0; i < out_h; ++i) rows[i] = ResizeTap<T>::at(i, in.h, out_h);
  for (int j = 0; j < out_w; ++j) cols[j] = ResizeTap<T>::at(j, in.w, out_w);
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const T* src = gy.data() + static_cast<std::size_t>(pl) * out_h * out_w;
    T* dst = gx.data() + static_cast<std::size_t>(pl) * in.plane();
    for (int i = 0; i < out_h; ++i) {
      const auto& r = rows[i];
      T* a = dst + r.i0 * in.w;
      T* b = dst + r.i1 * in.w;
      for (int j = 0; j < out_w; ++j) {
        const auto& c = cols[j];
        const T g = src[i * out_w + j];
        a[c.i0] += (T(1) - r.lambda) * (T(1) - c.lambda) * g;
        a[c.i1] += (T(1) - r.lambda) * c.lambda * g;
        b[c.i0] += r.lambda * (T(1) - c.lambda) * g;
        b[c.i1] += r.lambda * c.lambda * g;
      }
    }
  }
}

template <typename T>
Tensor<T> backward_warp(const Tensor<T>& feature, const Tensor<T>& flow) {
  const Shape fs = feature.shape();
  const Shape vs = flow.shape();
  require(vs.c == 2 && vs.same_spatial(fs),
          "backward_warp: flow " + vs.str() + " incompatible with feature " +
              fs.str());
  Tensor<T> out(fs);
  const T* fp = feature.data().data();
  const T* vp = flow.data().data();
  T* op = out.mutable_data().data();
  const std::size_t P = fs.plane();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < fs.n; ++n) {
    for (int y = 0; y < fs.h; ++y) {
      const T* u = vp + (static_cast<std::size_t>(n) * 2) * P;
      const T* v = u + P;
      for (int x = 0; x < fs.w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * fs.w + x;
        const auto tap = BilinearTap<T>::at(static_cast<T>(y) + v[p],
                                            static_cast<T>(x) + u[p], fs.h, fs.w);
        for (int c = 0; c < fs.c; ++c) {
          const std::size_t base = (static_cast<std::size_t>(n) * fs.c + c) * P;
          op[base + p] = tap.sample(fp + base, fs.w);
        }
      }
    }
  }
  return out;
}

template <typename T>
void backward_warp_backward(const Tensor<T>& feature, const Tensor<T>& flow,
                            std::span<const T> gy, std::span<T> gfeature,
                            std::span<T> gflow) {
  const Shape fs = feature.shape();
  const T* fp = feature.data().data();
  const T* vp = flow.data().data();
  const std::size_t P = fs.plane();
  // One sample per worker: every write below stays inside that sample.
#pragma omp parallel for schedule(static)
  for (int n = 0; n < fs.n; ++n) {
    const T* u = vp + (static_cast<std::size_t>(n) * 2) * P;
    const T* v = u + P;
    for (int y = 0; y < fs.h; ++y) {
      for (int x = 0; x < fs.w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * fs.w + x;
        const auto tap = BilinearTap<T>::at(static_cast<T>(y) + v[p],
                                            static_cast<T>(x) + u[p], fs.h, fs.w);
        T acc_y = 0, acc_x = 0;
        for (int c = 0; c < fs.c; ++c) {
          const std::size_t base = (static_cast<std::size_t>(n) * fs.c + c) * P;
          const T g = gy[base + p];
          if (!gfeature.empty()) tap.scatter(gfeature.data() + base, fs.w, g);
          if (!gflow.empty()) {
            T dy, dx;
            tap.coord_grad(fp + base, fs.w, dy, dx);
            acc_y += g * dy;
            acc_x += g * dx;
          }
        }
        if (!gflow.empty()) {
          gflow[(static_cast<std::size_t>(n) * 2) * P + p] += acc_x;
          gflow[(static_cast<std::size_t>(n) * 2 + 1) * P + p] += acc_y;
        }
      }
    }
  }
}

template <typename T>
Tensor<T> correlation(const Tensor<T>& ft, const Tensor<T>& fw, int radius) {
  const Shape s = ft.shape();
  require(s == fw.shape(), "correlation: " + s.str() + " vs " + fw.shape().str());
  require(radius >= 0, "correlation radius must be non-negative");
  const int D = 2 * radius + 1;
  Tensor<T> out({s.n, D * D, s.h, s.w});
  const T* a = ft.data().data();
  const T* b = fw.data().data();
  T* op = out.mutable_data().data();
  const std::size_t P = s.plane();
  const T inv_c = T(1) / static_cast<T>(s.c);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int d = 0; d < D * D; ++d) {
      const int dy = d / D - radius;
      const int dx = d % D - radius;
      T* dst = op + (static_cast<std::size_t>(n) * D * D + d) * P;
      for (int y = 0; y < s.h; ++y) {
        const int qy = std::clamp(y + dy, 0, s.h - 1);
        for (int x = 0; x < s.w; ++x) {
          const int qx = std::clamp(x + dx, 0, s.w - 1);
          T acc = 0;
          for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * P;
            acc += a[base + y * s.w + x] * b[base + qy * s.w + qx];
          }
          dst[y * s.w + x] = acc * inv_c;
        }
      }
    }
  }
  return out;
}

template <typename T>
void correlation_backward(const Tensor<T>& ft, const Tensor<T>& fw, int radius,
                          std::span<const T> gy, std::span<T> gft,
                          std::span<T> gfw) {
  const Shape s = ft.shape();
  const int D = 2 * radius + 1;
  const T* a = ft.data().data();
  const T* b = fw.data().data();
  const std::size_t P = s.plane();
  const T inv_c = T(1) / static_cast<T>(s.c);
  // Each worker owns one (sample, channel) plane of both gradients.
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * P;
      for (int d = 0; d < D * D; ++d) {
        const int dy = d / D - radius;
        const int dx = d % D - radius;
        const T* g = gy.data() + (static_cast<std::size_t>(n) * D * D + d) * P;
        for (int y = 0; y < s.h; ++y) {
          const int qy = std::clamp(y + dy, 0, s.h - 1);
          for (int x = 0; x < s.w; ++x) {
            const int qx = std::clamp(x + dx, 0, s.w - 1);
            const T gv = g[y * s.w + x] * inv_c;
            if (!gft.empty()) gft[base + y * s.w + x] += gv * b[base + qy * s.w + qx];
            if (!gfw.empty()) gfw[base + qy * s.w + qx] += gv * a[base + y * s.w + x];
          }
        }
      }
    }
  }
}

#define FGDC_INSTANTIATE(T)                                                     \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);               \
  template void resize_bilinear_backward(const Shape&, int, int,                \
                                         std::span<const T>, std::span<T>);     \
  template Tensor<T> backward_warp(const Tensor<T>&, const Tensor<T>&);         \
  template void backward_warp_backward(const Tensor<T>&, const Tensor<T>&,      \
                                       std::span<const T>, std::span<T>,        \
                                       std::span<T>);                           \
  template Tensor<T> correlation(const Tensor<T>&, const Tensor<T>&, int);      \
  template void correlation_backward(const Tensor<T>&, const Tensor<T>&, int,   \
                                     std::span<const T>, std::span<T>,          \
                                     std::span<T>);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)
#undef FGDC_INSTANTIATE

}  // namespace fgdc::kernels
