#include "fgdc/core/tape.hpp"

#include <stdexcept>

#include "fgdc/core/errors.hpp"

namespace fgdc {

template <typename T>
Tensor<T> Gradients<T>::of(const Var<T>& v) const {
  const int id = v.id();
  if (id < 0 || id >= static_cast<int>(grads_.size()) || grads_[id].empty())
    return Tensor<T>::zeros(v.shape());
  return Tensor<T>(shapes_[id], grads_[id]);
}

template <typename T>
std::vector<std::pair<Parameter<T>*, Tensor<T>>> Gradients<T>::parameters() const {
  std::vector<std::pair<Parameter<T>*, Tensor<T>>> out;
  out.reserve(bindings_.size());
  for (const auto& [p, id] : bindings_) {
    if (grads_[id].empty())
      out.emplace_back(p, Tensor<T>::zeros(shapes_[id]));
    else
      out.emplace_back(p, Tensor<T>(shapes_[id], grads_[id]));
  }
  return out;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, grad_enabled_});
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end())
    return Var<T>(this, it->second);
  Var<T> v = leaf(p.value);
  param_nodes_.emplace(&p, v.id());
  bindings_.emplace_back(&p, v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<Var<T>> inputs,
                       BackwardFn fn) {
  if (!value.all_finite())
    throw NumericalError("non-finite value produced by an operation (extents " +
                         value.shape().str() + ")");
  Node node;
  node.value = std::move(value);
  bool any = false;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.tape() != this)
      throw std::invalid_argument("operand recorded on a different tape");
    node.inputs.push_back(in.id());
    any = any || nodes_[in.id()].requires_grad;
  }
  node.requires_grad = grad_enabled_ && any;
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this)
    throw std::invalid_argument("loss recorded on a different tape");
  if (loss.value().numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got " +
                     loss.shape().str());
  if (!nodes_[loss.id()].requires_grad)
    throw std::invalid_argument("backward: loss is detached from the tape");

  const int count = loss.id() + 1;
  std::vector<std::vector<T>> grads(nodes_.size());
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) shapes[i] = nodes_[i].value.shape();
  grads[loss.id()].assign(1, T(1));

  std::vector<T*> in_ptrs;
  for (int id = count - 1; id >= 0; --id) {
    Node& node = nodes_[id];
    if (grads[id].empty() || !node.backward) continue;
    in_ptrs.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const int in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in].assign(nodes_[in].value.numel(), T(0));
      in_ptrs[k] = grads[in].data();
    }
    node.backward(std::span<const T>(grads[id]),
                  std::span<T* const>(in_ptrs.data(), in_ptrs.size()));
    // Interior gradients are dead once propagated.
    if (!node.inputs.empty()) std::vector<T>().swap(grads[id]);
  }
  return Gradients<T>(std::move(grads), std::move(shapes), bindings_);
}

template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace fgdc
