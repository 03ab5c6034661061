// Serial nested-loop versions of the sampling kernels. Slow on purpose: every
// output is computed straight from its definition.

#include <algorithm>
#include <cmath>

#include "fgdc/kernels/kernels.hpp"

namespace fgdc::reference {
namespace {

bool in_image(int y, int x, const Shape& s) { return y >= 0 && y < s.h && x >= 0 && x < s.w; }

template <typename T>
struct Sample {
  T value;
  T d_y;
  T d_x;
};

// Border-clamped bilinear read and its derivatives w.r.t. (y, x).
template <typename T>
Sample<T> read_clamped(const T* plane, int h, int w, T y, T x) {
  const bool in_y = y >= 0 && y <= h - 1;
  const bool in_x = x >= 0 && x <= w - 1;
  y = std::min(std::max(y, T(0)), T(h - 1));
  x = std::min(std::max(x, T(0)), T(w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const T ay = y - y0;
  const T ax = x - x0;
  const T a = plane[y0 * w + x0], b = plane[y0 * w + x1];
  const T c = plane[y1 * w + x0], d = plane[y1 * w + x1];
  Sample<T> s;
  s.value = a * (1 - ay) * (1 - ax) + b * (1 - ay) * ax + c * ay * (1 - ax) +
            d * ay * ax;
  s.d_y = in_y ? (c - a) * (1 - ax) + (d - b) * ax : T(0);
  s.d_x = in_x ? (b - a) * (1 - ay) + (d - c) * ay : T(0);
  return s;
}

template <typename T>
void splat_clamped(T* plane, int h, int w, T y, T x, T g) {
  y = std::min(std::max(y, T(0)), T(h - 1));
  x = std::min(std::max(x, T(0)), T(w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const T ay = y - y0;
  const T ax = x - x0;
  plane[y0 * w + x0] += g * (1 - ay) * (1 - ax);
  plane[y0 * w + x1] += g * (1 - ay) * ax;
  plane[y1 * w + x0] += g * ay * (1 - ax);
  plane[y1 * w + x1] += g * ay * ax;
}

template <typename T>
T resize_src(int dst, int in, int out) {
  T s = (dst + T(0.5)) * T(in) / T(out) - T(0.5);
  return s < 0 ? T(0) : s;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvOptions& opt) {
  const Shape xs = x.shape(), ws = w.shape();
  const Shape ys = conv_out_shape(xs, ws, opt);
  Tensor<T> y(ys);
  const int cg = xs.c / opt.groups, og = ws.n / opt.groups;
  for (int n = 0; n < ys.n; ++n)
    for (int o = 0; o < ys.c; ++o) {
      const int g = o / og;
      for (int oy = 0; oy < ys.h; ++oy)
        for (int ox = 0; ox < ys.w; ++ox) {
          T acc = bias ? bias->data()[o] : T(0);
          for (int ci = 0; ci < cg; ++ci)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * opt.stride - opt.padding + ky;
                const int ix = ox * opt.stride - opt.padding + kx;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += w.at(o, ci, ky, kx) * x.at(n, g * cg + ci, iy, ix);
              }
          y.at(n, o, oy, ox) = acc;
        }
    }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                     std::span<const T> gy, const ConvOptions& opt,
                     std::span<T> gx, std::span<T> gw, std::span<T> gb) {
  const Shape xs = x.shape(), ws = w.shape();
  const Shape ys = conv_out_shape(xs, ws, opt);
  const int cg = xs.c / opt.groups, og = ws.n / opt.groups;
  for (int n = 0; n < ys.n; ++n)
    for (int o = 0; o < ys.c; ++o) {
      const int g = o / og;
      for (int oy = 0; oy < ys.h; ++oy)
        for (int ox = 0; ox < ys.w; ++ox) {
          const T go = gy[((static_cast<std::size_t>(n) * ys.c + o) * ys.h + oy) * ys.w + ox];
          if (!gb.empty()) gb[o] += go;
          for (int ci = 0; ci < cg; ++ci)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * opt.stride - opt.padding + ky;
                const int ix = ox * opt.stride - opt.padding + kx;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                const std::size_t xi = x.index(n, g * cg + ci, iy, ix);
                const std::size_t wi = w.index(o, ci, ky, kx);
                if (!gw.empty()) gw[wi] += go * x.data()[xi];
                if (!gx.empty()) gx[xi] += go * w.data()[wi];
              }
        }
    }
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize target must be at least 1x1");
  const Shape xs = x.shape();
  Tensor<T> y({xs.n, xs.c, out_h, out_w});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const T sy = resize_src<T>(i, xs.h, out_h);
          const T sx = resize_src<T>(j, xs.w, out_w);
          const int y0 = std::min(static_cast<int>(sy), xs.h - 1);
          const int x0 = std::min(static_cast<int>(sx), xs.w - 1);
          const int y1 = std::min(y0 + 1, xs.h - 1);
          const int x1 = std::min(x0 + 1, xs.w - 1);
          const T ly = y0 == y1 ? T(0) : sy - y0;
          const T lx = x0 == x1 ? T(0) : sx - x0;
          y.at(n, c, i, j) = (1 - ly) * (1 - lx) * x.at(n, c, y0, x0) +
                             (1 - ly) * lx * x.at(n, c, y0, x1) +
                             ly * (1 - lx) * x.at(n, c, y1, x0) +
                             ly * lx * x.at(n, c, y1, x1);
        }
  return y;
}

template <typename T>
void resize_bilinear_backward(const Shape& in, int out_h, int out_w,
                              std::span<const T> gy, std::span<T> gx) {
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const T sy = resize_src<T>(i, in.h, out_h);
          const T sx = resize_src<T>(j, in.w, out_w);
          const int y0 = std::min(static_cast<int>(sy), in.h - 1);
          const int x0 = std::min(static_cast<int>(sx), in.w - 1);
          const int y1 = std::min(y0 + 1, in.h - 1);
          const int x1 = std::min(x0 + 1, in.w - 1);
          const T ly = y0 == y1 ? T(0) : sy - y0;
          const T lx = x0 == x1 ? T(0) : sx - x0;
          const T g = gy[((static_cast<std::size_t>(n) * in.c + c) * out_h + i) * out_w + j];
          T* plane = gx.data() + (static_cast<std::size_t>(n) * in.c + c) * in.plane();
          plane[y0 * in.w + x0] += (1 - ly) * (1 - lx) * g;
          plane[y0 * in.w + x1] += (1 - ly) * lx * g;
          plane[y1 * in.w + x0] += ly * (1 - lx) * g;
          plane[y1 * in.w + x1] += ly * lx * g;
        }
}

template <typename T>
Tensor<T> backward_warp(const Tensor<T>& feature, const Tensor<T>& flow) {
  const Shape fs = feature.shape();
  require(flow.shape().c == 2 && flow.shape().same_spatial(fs),
          "backward_warp: flow/feature mismatch");
  Tensor<T> out(fs);
  for (int n = 0; n < fs.n; ++n)
    for (int c = 0; c < fs.c; ++c)
      for (int y = 0; y < fs.h; ++y)
        for (int x = 0; x < fs.w; ++x) {
          const T* plane = feature.data().data() + feature.index(n, c, 0, 0);
          out.at(n, c, y, x) = read_clamped(plane, fs.h, fs.w, y + flow.at(n, 1, y, x),
                                            x + flow.at(n, 0, y, x))
                                   .value;
        }
  return out;
}

template <typename T>
void backward_warp_backward(const Tensor<T>& feature, const Tensor<T>& flow,
                            std::span<const T> gy, std::span<T> gfeature,
                            std::span<T> gflow) {
  const Shape fs = feature.shape();
  for (int n = 0; n < fs.n; ++n)
    for (int c = 0; c < fs.c; ++c)
      for (int y = 0; y < fs.h; ++y)
        for (int x = 0; x < fs.w; ++x) {
          const T sy = y + flow.at(n, 1, y, x);
          const T sx = x + flow.at(n, 0, y, x);
          const std::size_t base = feature.index(n, c, 0, 0);
          const T g = gy[feature.index(n, c, y, x)];
          if (!gfeature.empty()) splat_clamped(gfeature.data() + base, fs.h, fs.w, sy, sx, g);
          if (!gflow.empty()) {
            const auto s = read_clamped(feature.data().data() + base, fs.h, fs.w, sy, sx);
            gflow[flow.index(n, 0, y, x)] += g * s.d_x;
            gflow[flow.index(n, 1, y, x)] += g * s.d_y;
          }
        }
}

template <typename T>
Tensor<T> correlation(const Tensor<T>& ft, const Tensor<T>& fw, int radius) {
  const Shape s = ft.shape();
  require(s == fw.shape() && radius >= 0, "correlation: bad arguments");
  const int D = 2 * radius + 1;
  Tensor<T> out({s.n, D * D, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x) {
            const int qy = std::clamp(y + dy, 0, s.h - 1);
            const int qx = std::clamp(x + dx, 0, s.w - 1);
            T acc = 0;
            for (int c = 0; c < s.c; ++c) acc += ft.at(n, c, y, x) * fw.at(n, c, qy, qx);
            out.at(n, (dy + radius) * D + dx + radius, y, x) = acc / s.c;
          }
  return out;
}

template <typename T>
void correlation_backward(const Tensor<T>& ft, const Tensor<T>& fw, int radius,
                          std::span<const T> gy, std::span<T> gft,
                          std::span<T> gfw) {
  const Shape s = ft.shape();
  const int D = 2 * radius + 1;
  for (int n = 0; n < s.n; ++n)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x) {
            const int qy = std::clamp(y + dy, 0, s.h - 1);
            const int qx = std::clamp(x + dx, 0, s.w - 1);
            const int d = (dy + radius) * D + dx + radius;
            const T g = gy[((static_cast<std::size_t>(n) * D * D + d) * s.h + y) * s.w + x] / s.c;
            for (int c = 0; c < s.c; ++c) {
              if (!gft.empty()) gft[ft.index(n, c, y, x)] += g * fw.at(n, c, qy, qx);
              if (!gfw.empty()) gfw[fw.index(n, c, qy, qx)] += g * ft.at(n, c, y, x);
            }
          }
}

template <typename T>
Tensor<T> deform_conv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, const Tensor<T>& offsets,
                      const Tensor<T>& mods, const Tensor<T>* base_flow,
                      const DeformOptions& opt) {
  const Shape xs = x.shape();
  const Shape flow_shape = base_flow ? base_flow->shape() : Shape{};
  check_deform_shapes(xs, w.shape(), offsets.shape(), mods.shape(),
                      base_flow ? &flow_shape : nullptr, opt);
  const int k = opt.kernel, K = k * k, pad = k / 2;
  const int cg = xs.c / opt.offset_groups;
  const int O = w.shape().n;
  Tensor<T> y({xs.n, O, xs.h, xs.w});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < O; ++o)
      for (int py = 0; py < xs.h; ++py)
        for (int px = 0; px < xs.w; ++px) {
          T acc = bias ? bias->data()[o] : T(0);
          for (int c = 0; c < xs.c; ++c) {
            const int g = c / cg;
            for (int kk = 0; kk < K; ++kk) {
              if (!in_image(py + kk / k - pad, px + kk % k - pad, xs)) continue;
              T sy = py + kk / k - pad + offsets.at(n, (g * K + kk) * 2 + 1, py, px);
              T sx = px + kk % k - pad + offsets.at(n, (g * K + kk) * 2, py, px);
              if (base_flow) {
                sy += base_flow->at(n, 1, py, px);
                sx += base_flow->at(n, 0, py, px);
              }
              const T* plane = x.data().data() + x.index(n, c, 0, 0);
              acc += w.at(o, c, kk / k, kk % k) *
                     read_clamped(plane, xs.h, xs.w, sy, sx).value *
                     mods.at(n, g * K + kk, py, px);
            }
          }
          y.at(n, o, py, px) = acc;
        }
  return y;
}

template <typename T>
void deform_conv_backward(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& offsets, const Tensor<T>& mods,
                          const Tensor<T>* base_flow, const DeformOptions& opt,
                          std::span<const T> gy, std::span<T> gx,
                          std::span<T> gw, std::span<T> gb,
                          std::span<T> goffsets, std::span<T> gmods,
                          std::span<T> gflow) {
  const Shape xs = x.shape();
  const int k = opt.kernel, K = k * k, pad = k / 2;
  const int cg = xs.c / opt.offset_groups;
  const int O = w.shape().n;
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < O; ++o)
      for (int py = 0; py < xs.h; ++py)
        for (int px = 0; px < xs.w; ++px) {
          const T go = gy[((static_cast<std::size_t>(n) * O + o) * xs.h + py) * xs.w + px];
          if (!gb.empty()) gb[o] += go;
          for (int c = 0; c < xs.c; ++c) {
            const int g = c / cg;
            for (int kk = 0; kk < K; ++kk) {
              if (!in_image(py + kk / k - pad, px + kk % k - pad, xs)) continue;
              const std::size_t oxi = offsets.index(n, (g * K + kk) * 2, py, px);
              const std::size_t oyi = offsets.index(n, (g * K + kk) * 2 + 1, py, px);
              T sy = py + kk / k - pad + offsets.data()[oyi];
              T sx = px + kk % k - pad + offsets.data()[oxi];
              if (base_flow) {
                sy += base_flow->at(n, 1, py, px);
                sx += base_flow->at(n, 0, py, px);
              }
              const std::size_t base = x.index(n, c, 0, 0);
              const auto s = read_clamped(x.data().data() + base, xs.h, xs.w, sy, sx);
              const T wv = w.at(o, c, kk / k, kk % k);
              const std::size_t mi = mods.index(n, g * K + kk, py, px);
              const T m = mods.data()[mi];
              if (!gw.empty()) gw[w.index(o, c, kk / k, kk % k)] += go * s.value * m;
              if (!gmods.empty()) gmods[mi] += go * wv * s.value;
              if (!gx.empty()) splat_clamped(gx.data() + base, xs.h, xs.w, sy, sx, go * wv * m);
              const T gyc = go * wv * m * s.d_y;
              const T gxc = go * wv * m * s.d_x;
              if (!goffsets.empty()) {
                goffsets[oxi] += gxc;
                goffsets[oyi] += gyc;
              }
              if (!gflow.empty()) {
                gflow[(static_cast<std::size_t>(n) * 2) * xs.plane() + py * xs.w + px] += gxc;
                gflow[(static_cast<std::size_t>(n) * 2 + 1) * xs.plane() + py * xs.w + px] += gyc;
              }
            }
          }
        }
}

#define FGDC_INSTANTIATE(T)                                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,  \
                            const ConvOptions&);                                   \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&,                \
                                std::span<const T>, const ConvOptions&,            \
                                std::span<T>, std::span<T>, std::span<T>);         \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int, int);                  \
  template void resize_bilinear_backward(const Shape&, int, int,                   \
                                         std::span<const T>, std::span<T>);        \
  template Tensor<T> backward_warp(const Tensor<T>&, const Tensor<T>&);            \
  template void backward_warp_backward(const Tensor<T>&, const Tensor<T>&,         \
                                       std::span<const T>, std::span<T>,           \
                                       std::span<T>);                              \
  template Tensor<T> correlation(const Tensor<T>&, const Tensor<T>&, int);         \
  template void correlation_backward(const Tensor<T>&, const Tensor<T>&, int,      \
                                     std::span<const T>, std::span<T>,             \
                                     std::span<T>);                                \
  template Tensor<T> deform_conv(const Tensor<T>&, const Tensor<T>&,               \
                                 const Tensor<T>*, const Tensor<T>&,               \
                                 const Tensor<T>&, const Tensor<T>*,               \
                                 const DeformOptions&);                            \
  template void deform_conv_backward(                                              \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
      const Tensor<T>*, const DeformOptions&, std::span<const T>, std::span<T>,    \
      std::span<T>, std::span<T>, std::span<T>, std::span<T>, std::span<T>);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)
#undef FGDC_INSTANTIATE

}  // namespace fgdc::reference
