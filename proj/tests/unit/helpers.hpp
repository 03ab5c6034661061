#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "fgdc/core/parameters.hpp"

namespace fgdc::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (T& v : t.mutable_data()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T = double>
Tensor<T> normal_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<T> t(s);
  for (T& v : t.mutable_data()) v = static_cast<T>(g(rng));
  return t;
}

template <typename T>
Tensor<T> filled(Shape s, T v) {
  return Tensor<T>::full(s, v);
}

// Overwrites every parameter that is still all zero (zero-initialized heads
// and biases) with uniform values in [-scale, scale], so tests can exercise
// paths that initialization switches off.
template <typename T>
void randomize_zero_parameters(ParameterStore<T>& store, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& p : store.all()) {
    if (std::any_of(p.value.data().begin(), p.value.data().end(), [](T v) { return v != 0; }))
      continue;
    Tensor<T> v(p.value.shape());
    for (T& x : v.mutable_data()) x = static_cast<T>(u(rng));
    p.value = v;
  }
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fgdc_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fgdc::testing
