#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "fgdc/core/tensor.hpp"

namespace fgdc {

constexpr double kPsnrCap = 99.0;

// 10 log10(1 / MSE) for images in [0, 1]; kPsnrCap when MSE < 1e-10.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), channels and
// samples; K1 = 0.01, K2 = 0.03, dynamic range 1.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

// Root-mean-square difference on the 0-255 scale.
template <typename T>
double interpolation_error(const Tensor<T>& a, const Tensor<T>& b);

// Mean Euclidean distance between 2-channel flows. With a 1-channel mask,
// only pixels where mask > 0.5 count.
template <typename T>
double epe(const Tensor<T>& f, const Tensor<T>& g, const Tensor<T>* mask = nullptr);

struct MetricRecord {
  std::string sample_id;
  double psnr = 0, ssim = 0, ie = 0;
  std::optional<double> epe;
};

void to_json(nlohmann::json& j, const MetricRecord& r);

}  // namespace fgdc
