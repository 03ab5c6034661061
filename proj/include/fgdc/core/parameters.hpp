#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fgdc/core/ops.hpp"
#include "fgdc/core/tape.hpp"

namespace fgdc {

using Rng = std::mt19937_64;

// Owns every trainable tensor of a model. Addresses are stable, so layers keep
// plain pointers into the store.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value);
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;

  std::deque<Parameter<T>>& all() { return params_; }
  const std::deque<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  // Parameters whose name starts with prefix.
  std::vector<Parameter<T>*> with_prefix(std::string_view prefix);

 private:
  std::deque<Parameter<T>> params_;
};

enum class Init { kKaiming, kZero };

// Kaiming-uniform (ReLU gain) over fan-in = in_ch/groups * k * k.
template <typename T>
Tensor<T> kaiming_uniform(Shape weight_shape, Rng& rng);

template <typename T>
struct Conv2d {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  ConvOptions opt;

  // Padding defaults to k/2 ("same" at stride 1). Biases start at zero.
  static Conv2d create(ParameterStore<T>& store, const std::string& name,
                       int in_ch, int out_ch, int kernel, Rng& rng,
                       Init init = Init::kKaiming, int stride = 1,
                       int groups = 1, int padding = -1);

  Var<T> operator()(const Var<T>& x) const;
  int out_channels() const { return weight->value.shape().n; }
};

// 64-bit hash over names and raw bytes, for "did this change" assertions.
template <typename T>
std::uint64_t parameter_hash(const std::vector<Parameter<T>*>& params);

}  // namespace fgdc
