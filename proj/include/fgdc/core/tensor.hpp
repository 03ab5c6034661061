#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fgdc/core/errors.hpp"

namespace fgdc {

// Extents of a dense NCHW array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
  Shape with_channels(int channels) const { return {n, channels, h, w}; }
  bool same_spatial(const Shape& o) const {
    return n == o.n && h == o.h && w == o.w;
  }
};

// Dense NCHW tensor with shared, immutable-after-publication storage.
//
// Copies share the buffer. Kernels that fill a fresh tensor call
// mutable_data() while they are the sole owner.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return full({1, 1, 1, 1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return shape_.numel(); }
  bool empty() const { return storage_ == nullptr; }

  std::span<const T> data() const;
  std::span<T> mutable_data();

  T at(int n, int c, int y, int x) const { return data()[index(n, c, y, x)]; }
  T& at(int n, int c, int y, int x) { return mutable_data()[index(n, c, y, x)]; }
  T item() const;

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }

  // Deep copy with its own storage.
  Tensor clone() const;
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const;

 private:
  Shape shape_{};
  std::shared_ptr<std::vector<T>> storage_;
};

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

void require(bool condition, const std::string& message);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fgdc
