#include "fgdc/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace fgdc {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

void require(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

template <typename T>
Tensor<T>::Tensor(Shape shape)
    : shape_(shape),
      storage_(std::make_shared<std::vector<T>>(shape.numel(), T(0))) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
          "negative tensor extent " + shape.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(shape),
      storage_(std::make_shared<std::vector<T>>(std::move(values))) {
  require(storage_->size() == shape.numel(),
          "tensor data length " + std::to_string(storage_->size()) +
              " does not match extents " + shape.str());
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  return Tensor(shape, std::vector<T>(shape.numel(), value));
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  if (!storage_) return {};
  return {storage_->data(), storage_->size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!storage_) return {};
  if (storage_.use_count() > 1)
    throw std::logic_error("mutable access to shared tensor storage");
  return {storage_->data(), storage_->size()};
}

template <typename T>
T Tensor<T>::item() const {
  require(numel() == 1, "item() on tensor of extents " + shape_.str());
  return (*storage_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!storage_) return {};
  return Tensor(shape_, *storage_);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  require(shape.numel() == numel(),
          "cannot reshape " + shape_.str() + " to " + shape.str());
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data())
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(T)) ==
         0;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  T m = 0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

template class Tensor<float>;
template class Tensor<double>;
template bool bitwise_equal(const Tensor<float>&, const Tensor<float>&);
template bool bitwise_equal(const Tensor<double>&, const Tensor<double>&);
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace fgdc
