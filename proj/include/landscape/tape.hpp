#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "landscape/tensor.hpp"

namespace landscape {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
  // Subject to weight decay during training.
  bool decay = true;
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; only valid while the
// tape that produced it is alive.
template <typename T>
class Var {
 public:
  Var() = default;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order. backward() replays the recorded
// rules in reverse order exactly once; after that the tape is consumed and
// must be reset before it can be reused.
template <typename T>
class Tape {
 public:
  // Receives the gradient of the recorded output and accumulates into the
  // gradients of the operation's inputs.
  using BackwardFn = std::function<void(std::span<const T>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push_owned(std::move(value), false, nullptr); }

  // Records an externally owned tensor as a differentiable input; its grad
  // buffer receives the gradient.
  Var<T> watch(Tensor<T>& external) {
    check_live();
    nodes_.push_back(Node{nullptr, &external, true, nullptr});
    return Var<T>(this, nodes_.size() - 1);
  }

  // Records a parameter. Gradients flow into parameter.tensor.grad() when the
  // parameter is trainable and `track` is set.
  Var<T> parameter(Parameter<T>& p, bool track = true) {
    check_live();
    nodes_.push_back(Node{nullptr, &p.tensor, p.trainable && track, nullptr});
    return Var<T>(this, nodes_.size() - 1);
  }

  // Records an operation output with its backward rule.
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    if (!value.all_finite()) throw NumericError("non-finite value produced in forward pass");
    return push_owned(std::move(value), requires_grad, requires_grad ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(const Var<T>& v) const { return *nodes_.at(v.id()).tensor; }
  bool requires_grad(const Var<T>& v) const { return nodes_.at(v.id()).requires_grad; }

  // Gradient buffer of a recorded value, allocated as zeros on first use.
  std::span<T> grad(const Var<T>& v) { return nodes_.at(v.id()).tensor->grad(); }
  bool has_grad(const Var<T>& v) const { return nodes_.at(v.id()).tensor->has_grad(); }

  void backward(const Var<T>& loss) {
    if (consumed_) throw StateError("backward called on a consumed tape; reset it first");
    if (loss.tape_ != this) throw StateError("loss was not recorded on this tape");
    Tensor<T>& out = *nodes_.at(loss.id()).tensor;
    if (out.size() != 1) throw ShapeError("backward expects a scalar loss, got " + to_string(out.shape()));
    consumed_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    out.grad()[0] += T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.backward && node.tensor->has_grad()) node.backward(std::as_const(*node.tensor).grad());
    }
  }

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  struct Node {
    std::unique_ptr<Tensor<T>> owned;
    Tensor<T>* tensor;
    bool requires_grad;
    BackwardFn backward;
  };

  void check_live() const {
    if (consumed_) throw StateError("cannot record on a consumed tape; reset it first");
  }

  Var<T> push_owned(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    check_live();
    auto owned = std::make_unique<Tensor<T>>(std::move(value));
    Tensor<T>* raw = owned.get();
    nodes_.push_back(Node{std::move(owned), raw, requires_grad, std::move(backward)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace landscape
