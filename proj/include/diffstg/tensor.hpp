#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diffstg {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws ShapeError("<op>: <detail> [a] vs [b]").
[[noreturn]] void throw_shape_error(std::string_view op, std::string_view detail,
                                    const Shape& a, const Shape& b);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated into it
  bool requires_grad = false;

  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{0});
    return grad;
  }
};

/// Dense row-major array with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Values of a
/// tensor produced by a primitive are never modified afterwards, so tensors
/// not attached to a tape can be read from several threads.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Only meant for leaves (parameters, inputs) before they enter a tape.
  std::span<T> mutable_data() { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  // Deep copy of the values, detached from any tape.
  Tensor clone() const { return Tensor(shape(), node_->value); }

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : node_(std::make_shared<TensorNode<T>>()) {
  node_->value.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : node_(std::make_shared<TensorNode<T>>()) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " needs " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw ShapeError("item: tensor " + shape_string(shape()) + " is not a scalar");
  }
  return node_->value[0];
}

/// Ordered record of primitives applied to tensors that require gradients.
///
/// Primitives record onto the tape installed on the calling thread by a
/// TapeScope. With no tape installed nothing is recorded and outputs never
/// require gradients, which is the inference path.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op, std::shared_ptr<TensorNode<T>> output,
              BackwardFn backward) {
    entries_.push_back({std::string(op), std::move(output), std::move(backward)});
  }

  /// Replays backward rules in reverse order. Leaf gradients accumulate
  /// across calls; intermediate gradients are reset on every call.
  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got " +
                       (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    if (entries_.empty()) throw std::logic_error("backward: tape is empty");
    for (auto& e : entries_) e.output->grad.assign(e.output->value.size(), T{0});
    if (!loss.requires_grad()) {
      throw std::logic_error("backward: loss does not depend on any tensor requiring grad");
    }
    loss.node()->grad_buffer()[0] += T{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  std::string_view op_name(std::size_t i) const { return entries_.at(i).op; }

  static Tape* active() { return active_; }

 private:
  template <typename>
  friend class TapeScope;

  struct Entry {
    std::string op;
    std::shared_ptr<TensorNode<T>> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;

  static inline thread_local Tape* active_ = nullptr;
};

template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_) { Tape<T>::active_ = &tape; }
  ~TapeScope() { Tape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

}  // namespace diffstg
