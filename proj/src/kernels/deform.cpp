#include <Eigen/Core>
#include <vector>

#include "fgdc/kernels/bilinear.hpp"
#include "fgdc/kernels/kernels.hpp"

namespace fgdc::kernels {
namespace {

using detail::BilinearTap;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DeformGeometry {
  int channels, height, width;
  int kernel, groups;
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  int taps() const { return kernel * kernel; }
  int group_channels() const { return channels / groups; }
};

// Kernel-grid taps that land in the padding ring contribute zero, exactly as
// conv2d's zero padding; displaced samples of in-image taps clamp to the border.
inline bool tap_in_image(const DeformGeometry& geo, int kk, int y, int x) {
  const int pad = geo.kernel / 2;
  const int ty = y + kk / geo.kernel - pad;
  const int tx = x + kk % geo.kernel - pad;
  return ty >= 0 && ty < geo.height && tx >= 0 && tx < geo.width;
}

// Tap position for output pixel p, kernel tap kk and offset group g.
template <typename T>
BilinearTap<T> deform_tap(const DeformGeometry& geo, const T* off,
                          const T* flow, int g, int kk, int y, int x) {
  const std::size_t P = geo.plane();
  const int K = geo.taps();
  const int pad = geo.kernel / 2;
  const std::size_t p = static_cast<std::size_t>(y) * geo.width + x;
  T py = static_cast<T>(y + kk / geo.kernel - pad) +
         off[(static_cast<std::size_t>(g * K + kk) * 2 + 1) * P + p];
  T px = static_cast<T>(x + kk % geo.kernel - pad) +
         off[(static_cast<std::size_t>(g * K + kk) * 2) * P + p];
  if (flow) {
    px += flow[p];
    py += flow[P + p];
  }
  return BilinearTap<T>::at(py, px, geo.height, geo.width);
}

// Modulated, displaced im2col for one sample: (C*k*k) x (H*W).
template <typename T>
void deform_im2col(const DeformGeometry& geo, const T* x, const T* off,
                   const T* mod, const T* flow, T* col) {
  const std::size_t P = geo.plane();
  const int K = geo.taps();
  const int cg = geo.group_channels();
  for (int g = 0; g < geo.groups; ++g) {
    for (int kk = 0; kk < K; ++kk) {
      const T* m = mod + static_cast<std::size_t>(g * K + kk) * P;
      for (int y = 0; y < geo.height; ++y) {
        for (int xx = 0; xx < geo.width; ++xx) {
          const std::size_t p = static_cast<std::size_t>(y) * geo.width + xx;
          if (!tap_in_image(geo, kk, y, xx)) {
            for (int c = g * cg; c < (g + 1) * cg; ++c)
              col[(static_cast<std::size_t>(c) * K + kk) * P + p] = T(0);
            continue;
          }
          const auto tap = deform_tap(geo, off, flow, g, kk, y, xx);
          for (int c = g * cg; c < (g + 1) * cg; ++c)
            col[(static_cast<std::size_t>(c) * K + kk) * P + p] =
                m[p] * tap.sample(x + c * P, geo.width);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> deform_conv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, const Tensor<T>& offsets,
                      const Tensor<T>& mods, const Tensor<T>* base_flow,
                      const DeformOptions& opt) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const Shape flow_shape = base_flow ? base_flow->shape() : Shape{};
  check_deform_shapes(xs, ws, offsets.shape(), mods.shape(),
                      base_flow ? &flow_shape : nullptr, opt);
  const DeformGeometry geo{xs.c, xs.h, xs.w, opt.kernel, opt.offset_groups};
  const int O = ws.n;
  const int CK = xs.c * geo.taps();
  const std::size_t P = geo.plane();
  Tensor<T> y({xs.n, O, xs.h, xs.w});
  T* yp = y.mutable_data().data();
  Eigen::Map<const RowMat<T>> wm(w.data().data(), O, CK);

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(CK) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      deform_im2col(geo, x.data().data() + n * xs.c * P,
                    offsets.data().data() + n * offsets.shape().c * P,
                    mods.data().data() + n * mods.shape().c * P,
                    base_flow ? base_flow->data().data() + n * 2 * P : nullptr,
                    col.data());
      Eigen::Map<RowMat<T>> ym(yp + n * O * P, O, static_cast<Eigen::Index>(P));
      ym.noalias() = wm * Eigen::Map<const RowMat<T>>(col.data(), CK, P);
      if (bias) {
        for (int o = 0; o < O; ++o)
          ym.row(o).array() += bias->data()[o];
      }
    }
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
  const DeformGeometry geo{xs.c, xs.h, xs.w, opt.kernel, opt.offset_groups};
  const int O = w.shape().n;
  const int K = geo.taps();
  const int CK = xs.c * K;
  const int cg = geo.group_channels();
  const std::size_t P = geo.plane();
  const int off_c = offsets.shape().c;
  const int mod_c = mods.shape().c;
  Eigen::Map<const RowMat<T>> wm(w.data().data(), O, CK);

  if (!gb.empty()) {
    for (int n = 0; n < xs.n; ++n)
      for (int o = 0; o < O; ++o) {
        T acc = 0;
        const T* row = gy.data() + (static_cast<std::size_t>(n) * O + o) * P;
        for (std::size_t p = 0; p < P; ++p) acc += row[p];
        gb[o] += acc;
      }
  }

  std::vector<T> gw_parts(gw.empty() ? 0 : static_cast<std::size_t>(xs.n) * w.numel());
  const bool need_sampling_grads =
      !gx.empty() || !goffsets.empty() || !gmods.empty() || !gflow.empty();

#pragma omp parallel
  {
    std::vector<T> col(gw.empty() ? 0 : static_cast<std::size_t>(CK) * P);
    std::vector<T> gcol(need_sampling_grads ? static_cast<std::size_t>(CK) * P : 0);
#pragma omp for schedule(static)
    for (int n = 0; n < xs.n; ++n) {
      const T* xn = x.data().data() + n * xs.c * P;
      const T* off = offsets.data().data() + n * off_c * P;
      const T* mod = mods.data().data() + n * mod_c * P;
      const T* flow = base_flow ? base_flow->data().data() + n * 2 * P : nullptr;
      Eigen::Map<const RowMat<T>> gym(gy.data() + n * O * P, O, static_cast<Eigen::Index>(P));

      if (!gw.empty()) {
        deform_im2col(geo, xn, off, mod, flow, col.data());
        Eigen::Map<RowMat<T>> gwm(gw_parts.data() + n * w.numel(), O, CK);
        gwm.noalias() = gym * Eigen::Map<const RowMat<T>>(col.data(), CK, P).transpose();
      }
      if (!need_sampling_grads) continue;

      Eigen::Map<RowMat<T>> gcm(gcol.data(), CK, static_cast<Eigen::Index>(P));
      gcm.noalias() = wm.transpose() * gym;

      for (int g = 0; g < geo.groups; ++g) {
        for (int kk = 0; kk < K; ++kk) {
          const std::size_t mch = static_cast<std::size_t>(g * K + kk);
          const T* m = mod + mch * P;
          for (int yy = 0; yy < xs.h; ++yy) {
            for (int xx = 0; xx < xs.w; ++xx) {
              const std::size_t p = static_cast<std::size_t>(yy) * xs.w + xx;
              if (!tap_in_image(geo, kk, yy, xx)) continue;
              const auto tap = deform_tap(geo, off, flow, g, kk, yy, xx);
              T acc_m = 0, acc_y = 0, acc_x = 0;
              for (int c = g * cg; c < (g + 1) * cg; ++c) {
                const T gv = gcol[(static_cast<std::size_t>(c) * K + kk) * P + p];
                const T* plane = xn + c * P;
                acc_m += gv * tap.sample(plane, xs.w);
                if (!gx.empty())
                  tap.scatter(gx.data() + (static_cast<std::size_t>(n) * xs.c + c) * P,
                              xs.w, gv * m[p]);
                T dy, dx;
                tap.coord_grad(plane, xs.w, dy, dx);
                acc_y += gv * m[p] * dy;
                acc_x += gv * m[p] * dx;
              }
              if (!gmods.empty()) gmods[(n * mod_c + mch) * P + p] += acc_m;
              if (!goffsets.empty()) {
                goffsets[(n * off_c + mch * 2) * P + p] += acc_x;
                goffsets[(n * off_c + mch * 2 + 1) * P + p] += acc_y;
              }
              if (!gflow.empty()) {
                gflow[(n * 2) * P + p] += acc_x;
                gflow[(n * 2 + 1) * P + p] += acc_y;
              }
            }
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

#define FGDC_INSTANTIATE(T)                                                       \
  template Tensor<T> deform_conv(const Tensor<T>&, const Tensor<T>&,              \
                                 const Tensor<T>*, const Tensor<T>&,              \
                                 const Tensor<T>&, const Tensor<T>*,              \
                                 const DeformOptions&);                           \
  template void deform_conv_backward(                                             \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
      const Tensor<T>*, const DeformOptions&, std::span<const T>, std::span<T>,   \
      std::span<T>, std::span<T>, std::span<T>, std::span<T>, std::span<T>);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)
#undef FGDC_INSTANTIATE

}  // namespace fgdc::kernels
