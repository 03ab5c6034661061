#include "fgdc/core/parameters.hpp"

#include <cmath>
#include <cstring>

namespace fgdc {

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> value) {
  require(find(name) == nullptr, "duplicate parameter name " + name);
  params_.push_back(Parameter<T>{std::move(name), std::move(value)});
  return params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::with_prefix(std::string_view prefix) {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_)
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) out.push_back(&p);
  return out;
}

template <typename T>
Tensor<T> kaiming_uniform(Shape weight_shape, Rng& rng) {
  const double fan_in = static_cast<double>(weight_shape.c) * weight_shape.h * weight_shape.w;
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(weight_shape.numel());
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(weight_shape, std::move(values));
}

template <typename T>
Conv2d<T> Conv2d<T>::create(ParameterStore<T>& store, const std::string& name,
                            int in_ch, int out_ch, int kernel, Rng& rng,
                            Init init, int stride, int groups, int padding) {
  require(in_ch % groups == 0 && out_ch % groups == 0,
          name + ": channels not divisible by groups");
  const Shape ws{out_ch, in_ch / groups, kernel, kernel};
  Conv2d layer;
  layer.weight = &store.add(name + ".weight", init == Init::kZero
                                                  ? Tensor<T>::zeros(ws)
                                                  : kaiming_uniform<T>(ws, rng));
  layer.bias = &store.add(name + ".bias", Tensor<T>::zeros({1, 1, 1, out_ch}));
  layer.opt = ConvOptions{stride, padding < 0 ? kernel / 2 : padding, groups};
  return layer;
}

template <typename T>
Var<T> Conv2d<T>::operator()(const Var<T>& x) const {
  Tape<T>& tape = x.tape();
  return conv2d(x, tape.param(*weight), std::optional<Var<T>>(tape.param(*bias)), opt);
}

template <typename T>
std::uint64_t parameter_hash(const std::vector<Parameter<T>*>& params) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data().data(), p->value.numel() * sizeof(T));
  }
  return h;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template Tensor<float> kaiming_uniform(Shape, Rng&);
template Tensor<double> kaiming_uniform(Shape, Rng&);
template std::uint64_t parameter_hash(const std::vector<Parameter<float>*>&);
template std::uint64_t parameter_hash(const std::vector<Parameter<double>*>&);

}  // namespace fgdc
