#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fgdc/core/tensor.hpp"

namespace fgdc {

template <typename T>
class Tape;

// A named trainable tensor. Owned by a ParameterStore; the tape only binds it.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape<T>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::vector<T>> grads, std::vector<Shape> shapes,
            std::vector<std::pair<Parameter<T>*, int>> bindings)
      : grads_(std::move(grads)),
        shapes_(std::move(shapes)),
        bindings_(std::move(bindings)) {}

  // Gradient of the loss w.r.t. a tracked value; zeros if it was unreachable.
  Tensor<T> of(const Var<T>& v) const;
  // One entry per bound parameter, in binding order.
  std::vector<std::pair<Parameter<T>*, Tensor<T>>> parameters() const;

 private:
  std::vector<std::vector<T>> grads_;
  std::vector<Shape> shapes_;
  std::vector<std::pair<Parameter<T>*, int>> bindings_;
};

// Reverse-mode differentiation tape.
//
// Nodes are appended in execution order, so operands always precede their
// consumers. backward() walks the nodes once in reverse.
template <typename T>
class Tape {
 public:
  // grad_in[i] is null when operand i does not require a gradient.
  using BackwardFn =
      std::function<void(std::span<const T> grad_out, std::span<T* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);
  // Leaf bound to a parameter; repeated calls for the same parameter reuse
  // the node.
  Var<T> param(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn fn);

  Gradients<T> backward(const Var<T>& loss);

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // When false, record() drops backward closures and everything is a constant.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
  std::vector<std::pair<Parameter<T>*, int>> bindings_;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace fgdc
