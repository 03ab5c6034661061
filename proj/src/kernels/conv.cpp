#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "fgdc/kernels/kernels.hpp"

namespace fgdc::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct Geometry {
  int channels, height, width;
  int kernel, stride, padding;
  int out_h, out_w;
};

// Output columns [lo, hi) whose input column ox*stride - padding + kx lies
// inside [0, width).
inline void valid_columns(const Geometry& g, int kx, int& lo, int& hi) {
  const int shift = kx - g.padding;
  lo = shift >= 0 ? 0 : (-shift + g.stride - 1) / g.stride;
  const int last = g.width - 1 - shift;  // largest ox*stride allowed
  hi = last < 0 ? 0 : std::min(g.out_w, last / g.stride + 1);
  lo = std::min(lo, hi);
}

// Unfolds one channel group of one sample into a (channels*k*k) x (oh*ow)
// matrix.
template <typename T>
void im2col(const T* x, const Geometry& g, T* col) {
  const int k = g.kernel;
  const int P = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        int lo, hi;
        valid_columns(g, kx, lo, hi);
        const int shift = kx - g.padding;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * g.width + shift;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Geometry& g, T* x) {
  const int k = g.kernel;
  const int P = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        int lo, hi;
        valid_columns(g, kx, lo, hi);
        const int shift = kx - g.padding;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + iy * g.width + shift;
          if (g.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvOptions& opt) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const Shape ys = conv_out_shape(xs, ws, opt);
  if (bias) require(bias->numel() == static_cast<std::size_t>(ws.n),
                    "conv bias length mismatch");
  Tensor<T> y(ys);

  const int groups = opt.groups;
  const int cg = xs.c / groups;
  const int og = ws.n / groups;
  const int k = ws.h;
  const int K = cg * k * k;
  const int P = ys.h * ys.w;
  const Geometry geo{cg, xs.h, xs.w, k, opt.stride, opt.padding, ys.h, ys.w};
  const bool direct = k == 1 && opt.stride == 1 && opt.padding == 0;

  const T* xp = x.data().data();
  const T* wp = w.data().data();
  T* yp = y.mutable_data().data();
  const T* bp = bias ? bias->data().data() : nullptr;

#pragma omp parallel
  {
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(K) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        const T* xg = xp + (static_cast<std::size_t>(n) * xs.c + g * cg) * xs.plane();
        const T* src = xg;
        if (!direct) {
          im2col(xg, geo, col.data());
          src = col.data();
        }
        ConstMatMap<T> wm(wp + static_cast<std::size_t>(g) * og * K, og, K);
        ConstMatMap<T> cm(src, K, P);
        MatMap<T> ym(yp + (static_cast<std::size_t>(n) * ys.c + g * og) * P, og, P);
        ym.noalias() = wm * cm;
      }
      if (bp) {
        for (int o = 0; o < ys.c; ++o) {
          T* row = yp + (static_cast<std::size_t>(n) * ys.c + o) * P;
          for (int p = 0; p < P; ++p) row[p] += bp[o];
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w,
                     std::span<const T> gy, const ConvOptions& opt,
                     std::span<T> gx, std::span<T> gw, std::span<T> gb) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const Shape ys = conv_out_shape(xs, ws, opt);
  const int groups = opt.groups;
  const int cg = xs.c / groups;
  const int og = ws.n / groups;
  const int k = ws.h;
  const int K = cg * k * k;
  const int P = ys.h * ys.w;
  const Geometry geo{cg, xs.h, xs.w, k, opt.stride, opt.padding, ys.h, ys.w};
  const bool direct = k == 1 && opt.stride == 1 && opt.padding == 0;

  const T* xp = x.data().data();
  const T* wp = w.data().data();
  const T* gyp = gy.data();

  if (!gb.empty()) {
    for (int n = 0; n < ys.n; ++n)
      for (int o = 0; o < ys.c; ++o) {
        const T* row = gyp + (static_cast<std::size_t>(n) * ys.c + o) * P;
        T acc = 0;
        for (int p = 0; p < P; ++p) acc += row[p];
        gb[o] += acc;
      }
  }
  if (gx.empty() && gw.empty()) return;

  // Per-sample weight gradients, reduced in sample order afterwards so the
  // result does not depend on the worker count.
  std::vector<T> gw_parts(gw.empty() ? 0 : static_cast<std::size_t>(xs.n) * w.numel());

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(K) * P);
    std::vector<T> gcol(direct ? 0 : static_cast<std::size_t>(K) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        const std::size_t xoff = (static_cast<std::size_t>(n) * xs.c + g * cg) * xs.plane();
        ConstMatMap<T> gym(gyp + (static_cast<std::size_t>(n) * ys.c + g * og) * P, og, P);
        ConstMatMap<T> wm(wp + static_cast<std::size_t>(g) * og * K, og, K);
        if (!gw.empty()) {
          const T* src = xp + xoff;
          if (!direct) {
            im2col(xp + xoff, geo, col.data());
            src = col.data();
          }
          ConstMatMap<T> cm(src, K, P);
          MatMap<T> gwm(gw_parts.data() + n * w.numel() + static_cast<std::size_t>(g) * og * K, og, K);
          gwm.noalias() = gym * cm.transpose();
        }
        if (!gx.empty()) {
          if (direct) {
            MatMap<T> gxm(gx.data() + xoff, K, P);
            gxm.noalias() += wm.transpose() * gym;
          } else {
            MatMap<T> gcm(gcol.data(), K, P);
            gcm.noalias() = wm.transpose() * gym;
            col2im(gcol.data(), geo, gx.data() + xoff);
          }
        }
      }
    }
  }
  if (!gw.empty()) {
    for (int n = 0; n < xs.n; ++n) {
      const T* part = gw_parts.data() + n * w.numel();
      for (std::size_t i = 0; i < w.numel(); ++i) gw[i] += part[i];
    }
  }
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>*, const ConvOptions&);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>*, const ConvOptions&);
template void conv2d_backward(const Tensor<float>&, const Tensor<float>&,
                              std::span<const float>, const ConvOptions&,
                              std::span<float>, std::span<float>,
                              std::span<float>);
template void conv2d_backward(const Tensor<double>&, const Tensor<double>&,
                              std::span<const double>, const ConvOptions&,
                              std::span<double>, std::span<double>,
                              std::span<double>);

}  // namespace fgdc::kernels
