#include "fgdc/train/adam.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace fgdc {

double cosine_lr(long iter, long total, double base_lr, double final_lr) {
  if (total <= 0) throw std::invalid_argument("cosine_lr: total must be positive");
  if (iter < 0 || iter > total)
    throw std::invalid_argument("cosine_lr: iteration outside [0, total]");
  const double phase = std::numbers::pi * static_cast<double>(iter) / static_cast<double>(total);
  return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + std::cos(phase));
}

template <typename T>
void check_gradients(std::span<const ParamGrad<T>> grads, long iteration) {
  for (const auto& pg : grads) {
    double sq = 0;
    bool finite = true;
    for (T g : pg.grad.data()) {
      if (!std::isfinite(g)) finite = false;
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
    if (!finite) {
      std::ostringstream os;
      os << "non-finite gradient at iteration " << iteration << " in parameter "
         << pg.param->name << " (grad norm " << std::sqrt(sq) << ")";
      throw NumericalError(os.str());
    }
  }
}

template <typename T>
double clip_global_norm(std::span<ParamGrad<T>> grads, double max_norm) {
  double sq = 0;
  for (const auto& pg : grads)
    for (T g : pg.grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& pg : grads) {
      Tensor<T> scaled = pg.grad.clone();
      for (T& g : scaled.mutable_data()) g *= s;
      pg.grad = std::move(scaled);
    }
  }
  return norm;
}

template <typename T>
void Adam<T>::step(std::span<const ParamGrad<T>> grads, double lr, long iteration) {
  check_gradients(grads, iteration);
  ++steps_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
  for (const auto& pg : grads) {
    Parameter<T>& p = *pg.param;
    require(pg.grad.shape() == p.value.shape(), "adam: gradient shape mismatch for " + p.name);
    auto& m = m_[p.name];
    auto& v = v_[p.name];
    const std::size_t n = p.value.numel();
    if (m.empty()) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    Tensor<T> next = p.value.clone();
    auto w = next.mutable_data();
    auto g = pg.grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
      const double mh = m[i] / bc1, vh = v[i] / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mh / (std::sqrt(vh) + opt_.eps));
    }
    p.value = std::move(next);
  }
}

template class Adam<float>;
template class Adam<double>;
template void check_gradients(std::span<const ParamGrad<float>>, long);
template void check_gradients(std::span<const ParamGrad<double>>, long);
template double clip_global_norm(std::span<ParamGrad<float>>, double);
template double clip_global_norm(std::span<ParamGrad<double>>, double);

}  // namespace fgdc
