#include "fgdc/core/ops.hpp"

#include <cmath>
#include <string>

namespace fgdc {
namespace {

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      a.shape().str() + " vs " + b.shape().str());
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight,
              const std::optional<Var<T>>& bias, const ConvOptions& opt) {
  Tensor<T> xv = x.value();
  Tensor<T> wv = weight.value();
  Tensor<T> bv;
  if (bias) bv = bias->value();
  Tensor<T> y = kernels::conv2d(xv, wv, bias ? &bv : nullptr, opt);
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape().record(
      std::move(y), std::move(inputs),
      [xv, wv, opt, has_bias = bias.has_value()](std::span<const T> g,
                                                 std::span<T* const> gin) {
        auto span_of = [](T* p, std::size_t n) {
          return p ? std::span<T>(p, n) : std::span<T>();
        };
        kernels::conv2d_backward(
            xv, wv, g, opt, span_of(gin[0], xv.numel()),
            span_of(gin[1], wv.numel()),
            has_bias ? span_of(gin[2], wv.shape().n) : std::span<T>());
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "add");
  Tensor<T> out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return a.tape().record(std::move(out), {a, b},
                         [](std::span<const T> g, std::span<T* const> gin) {
                           for (int k = 0; k < 2; ++k)
                             if (gin[k])
                               for (std::size_t i = 0; i < g.size(); ++i) gin[k][i] += g[i];
                         });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "sub");
  Tensor<T> out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return a.tape().record(std::move(out), {a, b},
                         [](std::span<const T> g, std::span<T* const> gin) {
                           if (gin[0])
                             for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                           if (gin[1])
                             for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] -= g[i];
                         });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "mul");
  Tensor<T> av = a.value(), bv = b.value();
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av.data()[i] * bv.data()[i];
  return a.tape().record(std::move(out), {a, b},
                         [av, bv](std::span<const T> g, std::span<T* const> gin) {
                           auto x = av.data(), y = bv.data();
                           if (gin[0])
                             for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * y[i];
                           if (gin[1])
                             for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * x[i];
                         });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return a.tape().record(map(a.value(), [s](T v) { return v * s; }), {a},
                         [s](std::span<const T> g, std::span<T* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * s;
                         });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return a.tape().record(map(a.value(), [s](T v) { return v + s; }), {a},
                         [](std::span<const T> g, std::span<T* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                         });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = map(a.value(), [](T v) { return v > T(0) ? v : T(0); });
  Tensor<T> ov = out;
  return a.tape().record(std::move(out), {a},
                         [ov](std::span<const T> g, std::span<T* const> gin) {
                           auto y = ov.data();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (y[i] > T(0)) gin[0][i] += g[i];
                         });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = map(a.value(), [](T v) { return T(1) / (T(1) + std::exp(-v)); });
  Tensor<T> ov = out;
  return a.tape().record(std::move(out), {a},
                         [ov](std::span<const T> g, std::span<T* const> gin) {
                           auto y = ov.data();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             gin[0][i] += g[i] * y[i] * (T(1) - y[i]);
                         });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = map(a.value(), [](T v) { return std::tanh(v); });
  Tensor<T> ov = out;
  return a.tape().record(std::move(out), {a},
                         [ov](std::span<const T> g, std::span<T* const> gin) {
                           auto y = ov.data();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             gin[0][i] += g[i] * (T(1) - y[i] * y[i]);
                         });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  Tensor<T> av = a.value();
  return a.tape().record(map(av, [](T v) { return std::abs(v); }), {a},
                         [av](std::span<const T> g, std::span<T* const> gin) {
                           auto x = av.data();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             gin[0][i] += x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
                         });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> av = a.value();
  return a.tape().record(map(av, [lo, hi](T v) { return std::min(std::max(v, lo), hi); }),
                         {a},
                         [av, lo, hi](std::span<const T> g, std::span<T* const> gin) {
                           auto x = av.data();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (x[i] >= lo && x[i] <= hi) gin[0][i] += g[i];
                         });
}

template <typename T>
Var<T> elementwise(ElementwiseKind kind, const Var<T>& a,
                   const std::optional<Var<T>>& b, T scalar) {
  auto need_b = [&]() -> const Var<T>& {
    require(b.has_value(), "binary elementwise op needs a second operand");
    return *b;
  };
  switch (kind) {
    case ElementwiseKind::kAdd: return add(a, need_b());
    case ElementwiseKind::kSub: return sub(a, need_b());
    case ElementwiseKind::kMul: return mul(a, need_b());
    case ElementwiseKind::kRelu: return relu(a);
    case ElementwiseKind::kSigmoid: return sigmoid(a);
    case ElementwiseKind::kTanh: return tanh(a);
    case ElementwiseKind::kScale: return scale(a, scalar);
  }
  throw std::invalid_argument("unknown elementwise kind");
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w) {
  const Shape in = x.shape();
  if (in.h == out_h && in.w == out_w) return x;
  return x.tape().record(kernels::resize_bilinear(x.value(), out_h, out_w), {x},
                         [in, out_h, out_w](std::span<const T> g, std::span<T* const> gin) {
                           kernels::resize_bilinear_backward(
                               in, out_h, out_w, g, std::span<T>(gin[0], in.numel()));
                         });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  if (parts.size() == 1) return parts[0];
  const Shape first = parts[0].shape();
  int channels = 0;
  std::vector<int> sizes;
  for (const auto& p : parts) {
    require(p.shape().same_spatial(first),
            "concat_channels: spatial mismatch " + p.shape().str() + " vs " +
                first.str());
    channels += p.shape().c;
    sizes.push_back(p.shape().c);
  }
  const Shape os{first.n, channels, first.h, first.w};
  Tensor<T> out(os);
  auto o = out.mutable_data();
  const std::size_t P = first.plane();
  for (int n = 0; n < first.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const int c = p.shape().c;
      auto src = p.value().data().subspan(static_cast<std::size_t>(n) * c * P, c * P);
      std::copy(src.begin(), src.end(),
                o.begin() + (static_cast<std::size_t>(n) * channels + c0) * P);
      c0 += c;
    }
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(
      std::move(out), std::move(inputs),
      [sizes, channels, n_count = first.n, P](std::span<const T> g,
                                              std::span<T* const> gin) {
        for (int n = 0; n < n_count; ++n) {
          int c0 = 0;
          for (std::size_t k = 0; k < sizes.size(); ++k) {
            const int c = sizes[k];
            if (gin[k]) {
              const T* src = g.data() + (static_cast<std::size_t>(n) * channels + c0) * P;
              T* dst = gin[k] + static_cast<std::size_t>(n) * c * P;
              for (std::size_t i = 0; i < c * P; ++i) dst[i] += src[i];
            }
            c0 += c;
          }
        }
      });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape s = x.shape();
  require(begin >= 0 && count >= 1 && begin + count <= s.c,
          "slice_channels out of range for " + s.str());
  if (begin == 0 && count == s.c) return x;
  Tensor<T> out(s.with_channels(count));
  auto o = out.mutable_data();
  auto src = x.value().data();
  const std::size_t P = s.plane();
  for (int n = 0; n < s.n; ++n)
    std::copy_n(src.begin() + (static_cast<std::size_t>(n) * s.c + begin) * P, count * P,
                o.begin() + static_cast<std::size_t>(n) * count * P);
  return x.tape().record(std::move(out), {x},
                         [s, begin, count, P](std::span<const T> g, std::span<T* const> gin) {
                           for (int n = 0; n < s.n; ++n) {
                             const T* src = g.data() + static_cast<std::size_t>(n) * count * P;
                             T* dst = gin[0] + (static_cast<std::size_t>(n) * s.c + begin) * P;
                             for (std::size_t i = 0; i < count * P; ++i) dst[i] += src[i];
                           }
                         });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  const std::size_t count = x.value().numel();
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return x.tape().record(Tensor<T>::scalar(acc), {x},
                         [count](std::span<const T> g, std::span<T* const> gin) {
                           for (std::size_t i = 0; i < count; ++i) gin[0][i] += g[0];
                         });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& weights) {
  require(a.shape() == weights.shape(), "weighted_sum: shape mismatch");
  T acc = 0;
  auto x = a.value().data();
  auto w = weights.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w[i];
  return a.tape().record(Tensor<T>::scalar(acc), {a},
                         [weights](std::span<const T> g, std::span<T* const> gin) {
                           auto w = weights.data();
                           for (std::size_t i = 0; i < w.size(); ++i) gin[0][i] += g[0] * w[i];
                         });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t count = x.value().numel();
  require(count > 0, "mean of an empty tensor");
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const T inv = T(1) / static_cast<T>(count);
  return x.tape().record(Tensor<T>::scalar(acc * inv), {x},
                         [count, inv](std::span<const T> g, std::span<T* const> gin) {
                           for (std::size_t i = 0; i < count; ++i) gin[0][i] += g[0] * inv;
                         });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "mean_abs_diff");
  Tensor<T> av = a.value(), bv = b.value();
  const std::size_t count = av.numel();
  T acc = 0;
  for (std::size_t i = 0; i < count; ++i) acc += std::abs(av.data()[i] - bv.data()[i]);
  const T inv = T(1) / static_cast<T>(count);
  return a.tape().record(
      Tensor<T>::scalar(acc * inv), {a, b},
      [av, bv, inv](std::span<const T> g, std::span<T* const> gin) {
        auto x = av.data(), y = bv.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T d = x[i] - y[i];
          const T s = d > T(0) ? g[0] * inv : (d < T(0) ? -g[0] * inv : T(0));
          if (gin[0]) gin[0][i] += s;
          if (gin[1]) gin[1][i] -= s;
        }
      });
}

#define FGDC_INSTANTIATE(T)                                                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&,                             \
                         const std::optional<Var<T>>&, const ConvOptions&);        \
  template Var<T> elementwise(ElementwiseKind, const Var<T>&,                      \
                              const std::optional<Var<T>>&, T);                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                               \
  template Var<T> sub(const Var<T>&, const Var<T>&);                               \
  template Var<T> mul(const Var<T>&, const Var<T>&);                               \
  template Var<T> scale(const Var<T>&, T);                                         \
  template Var<T> add_scalar(const Var<T>&, T);                                    \
  template Var<T> relu(const Var<T>&);                                             \
  template Var<T> sigmoid(const Var<T>&);                                          \
  template Var<T> tanh(const Var<T>&);                                             \
  template Var<T> abs(const Var<T>&);                                              \
  template Var<T> clamp(const Var<T>&, T, T);                                      \
  template Var<T> resize_bilinear(const Var<T>&, int, int);                        \
  template Var<T> concat_channels(std::span<const Var<T>>);                        \
  template Var<T> slice_channels(const Var<T>&, int, int);                         \
  template Var<T> sum(const Var<T>&);                                              \
  template Var<T> mean(const Var<T>&);                                             \
  template Var<T> mean_abs_diff(const Var<T>&, const Var<T>&);                     \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)
#undef FGDC_INSTANTIATE

}  // namespace fgdc
