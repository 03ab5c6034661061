#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgdc/core/tape.hpp"

namespace fgdc {

// lr = final + 0.5 (base - final)(1 + cos(pi iter / total)).
double cosine_lr(long iter, long total, double base_lr, double final_lr);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct ParamGrad {
  Parameter<T>* param;
  Tensor<T> grad;
};

// Bias-corrected Adam. Moments are keyed by parameter name and kept in double.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  // Throws NumericalError naming the iteration, parameter and gradient norm
  // if any gradient is not finite.
  void step(std::span<const ParamGrad<T>> grads, double lr, long iteration);

  long steps() const { return steps_; }
  const std::vector<double>& first_moment(const std::string& name) const { return m_.at(name); }
  const std::vector<double>& second_moment(const std::string& name) const { return v_.at(name); }

 private:
  AdamOptions opt_;
  long steps_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_, v_;
};

// Raises NumericalError for the first non-finite gradient.
template <typename T>
void check_gradients(std::span<const ParamGrad<T>> grads, long iteration);

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
template <typename T>
double clip_global_norm(std::span<ParamGrad<T>> grads, double max_norm);

}  // namespace fgdc
