#include "fgdc/loss/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <vector>

namespace fgdc {
namespace {

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  require(a.shape() == b.shape(), std::string(what) + ": shape mismatch " +
                                      a.shape().str() + " vs " + b.shape().str());
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  double total = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - (size - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.numel());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a, b, "ssim");
  constexpr int kWin = 11;
  const Shape s = a.shape();
  require(s.h >= kWin && s.w >= kWin, "ssim needs images of at least 11x11, got " + s.str());
  const auto g = gaussian_window(kWin, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int oh = s.h - kWin + 1, ow = s.w - kWin + 1;
  double total = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
          for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
              const double w = g[i] * g[j];
              const double u = a.at(n, c, y + i, x + j), v = b.at(n, c, y + i, x + j);
              mx += w * u;
              my += w * v;
              sxx += w * u * u;
              syy += w * v * v;
              sxy += w * u * v;
            }
          const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
          total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
  return total / (static_cast<double>(s.n) * s.c * oh * ow);
}

template <typename T>
double interpolation_error(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a, b, "interpolation_error");
  double se = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = 255.0 * (static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(a.numel()));
}

template <typename T>
double epe(const Tensor<T>& f, const Tensor<T>& g, const Tensor<T>* mask) {
  check_same(f, g, "epe");
  const Shape s = f.shape();
  require(s.c == 2, "epe expects 2-channel flows, got " + s.str());
  if (mask) require(mask->shape() == s.with_channels(1), "epe: mask extents mismatch");
  double total = 0;
  std::size_t count = 0;
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        if (mask && !(mask->at(n, 0, y, x) > T(0.5))) continue;
        const double du = static_cast<double>(f.at(n, 0, y, x)) - g.at(n, 0, y, x);
        const double dv = static_cast<double>(f.at(n, 1, y, x)) - g.at(n, 1, y, x);
        total += std::sqrt(du * du + dv * dv);
        ++count;
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

void to_json(nlohmann::json& j, const MetricRecord& r) {
  j = {{"sample_id", r.sample_id}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"ie", r.ie}};
  if (r.epe) j["epe"] = *r.epe;
}

#define FGDC_INSTANTIATE(T)                                              \
  template double psnr(const Tensor<T>&, const Tensor<T>&);              \
  template double ssim(const Tensor<T>&, const Tensor<T>&);              \
  template double interpolation_error(const Tensor<T>&, const Tensor<T>&); \
  template double epe(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)

}  // namespace fgdc
