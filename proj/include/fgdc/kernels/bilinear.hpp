#pragma once

#include <algorithm>
#include <cmath>

namespace fgdc::detail {

// Bilinear tap at a continuous position with coordinates clamped to the
// border. dy/dx flags are zero where the clamp is active, which is where the
// sample no longer depends on the coordinate.
template <typename T>
struct BilinearTap {
  int y0, y1, x0, x1;
  T wy, wx;
  T dy, dx;

  static BilinearTap at(T y, T x, int height, int width) {
    BilinearTap t;
    const T ymax = static_cast<T>(height - 1);
    const T xmax = static_cast<T>(width - 1);
    t.dy = (y >= T(0) && y <= ymax) ? T(1) : T(0);
    t.dx = (x >= T(0) && x <= xmax) ? T(1) : T(0);
    y = std::clamp(y, T(0), ymax);
    x = std::clamp(x, T(0), xmax);
    const T fy = std::floor(y);
    const T fx = std::floor(x);
    t.y0 = static_cast<int>(fy);
    t.x0 = static_cast<int>(fx);
    t.y1 = std::min(t.y0 + 1, height - 1);
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.wy = y - fy;
    t.wx = x - fx;
    return t;
  }

  T sample(const T* plane, int width) const {
    const T v00 = plane[y0 * width + x0];
    const T v01 = plane[y0 * width + x1];
    const T v10 = plane[y1 * width + x0];
    const T v11 = plane[y1 * width + x1];
    return (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
           wy * ((T(1) - wx) * v10 + wx * v11);
  }

  // Derivatives of sample() w.r.t. the unclamped y and x coordinates.
  void coord_grad(const T* plane, int width, T& gy, T& gx) const {
    const T v00 = plane[y0 * width + x0];
    const T v01 = plane[y0 * width + x1];
    const T v10 = plane[y1 * width + x0];
    const T v11 = plane[y1 * width + x1];
    gy = dy * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
    gx = dx * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
  }

  void scatter(T* plane, int width, T g) const {
    plane[y0 * width + x0] += (T(1) - wy) * (T(1) - wx) * g;
    plane[y0 * width + x1] += (T(1) - wy) * wx * g;
    plane[y1 * width + x0] += wy * (T(1) - wx) * g;
    plane[y1 * width + x1] += wy * wx * g;
  }
};

// Source coordinate of an align-corners-false resize.
template <typename T>
struct ResizeTap {
  int i0, i1;
  T lambda;

  static ResizeTap at(int dst, int in_extent, int out_extent) {
    const T scale = static_cast<T>(in_extent) / static_cast<T>(out_extent);
    T src = (static_cast<T>(dst) + T(0.5)) * scale - T(0.5);
    if (src < T(0)) src = T(0);
    ResizeTap t;
    t.i0 = std::min(static_cast<int>(std::floor(src)), in_extent - 1);
    t.i1 = std::min(t.i0 + 1, in_extent - 1);
    t.lambda = src - static_cast<T>(t.i0);
    if (t.i0 == t.i1) t.lambda = T(0);
    return t;
  }
};

}  // namespace fgdc::detail
