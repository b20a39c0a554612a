#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xnet/error.hpp"

namespace xnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor handle.
///
/// Copies share storage. A tensor produced by an op is never written again;
/// only parameters (leaves) are updated in place by the optimizer. Gradient
/// storage is allocated lazily the first time something accumulates into it.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  BasicTensor(Shape shape, std::vector<T> data) : s_(std::make_shared<Storage>()) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    s_->shape = std::move(shape);
    s_->data = std::move(data);
  }

  static BasicTensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static BasicTensor full(Shape shape, T value) {
    const std::size_t n = shape_numel(shape);
    return BasicTensor(std::move(shape), std::vector<T>(n, value));
  }
  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t numel() const { return s_->data.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::span<const T> data() const { return s_->data; }
  // Only for leaves: freshly built inputs and optimizer updates.
  std::span<T> mutable_data() { return s_->data; }
  T item() const {
    if (!is_scalar()) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
    return s_->data[0];
  }
  T operator[](std::size_t i) const { return s_->data[i]; }

  bool grad_enabled() const noexcept { return s_ && s_->grad_enabled; }
  void set_grad_enabled(bool on) { s_->grad_enabled = on; }

  bool has_grad() const noexcept { return s_ && !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Handles share storage, so gradient accumulation is allowed through const
  // references held by backward closures.
  std::span<T> grad_buffer() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
  }
  void clear_grad() const {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }

  bool same_storage(const BasicTensor& other) const noexcept { return s_ == other.s_; }

  /// Deep copy with gradient tracking off.
  BasicTensor clone() const { return BasicTensor(shape(), s_->data); }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape(), std::vector<U>(s_->data.begin(), s_->data.end()));
  }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool grad_enabled = false;
  };
  std::shared_ptr<Storage> s_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Ordered record of differentiable ops executed while the tape is active.
///
/// An op records itself only when a tape is active on the current thread and
/// at least one input has gradients enabled. backward() replays entries in
/// exact reverse order; a tape can be consumed once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(BasicTensor<T> output, BackwardFn fn) {
    entries_.push_back(Entry{std::move(output), std::move(fn)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }

  void backward(BasicTensor<T> loss) {
    if (consumed_) throw AutodiffError("tape already consumed by a previous backward()");
    if (!loss.defined() || !loss.is_scalar()) {
      throw AutodiffError("backward() requires a scalar loss, got " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    consumed_ = true;
    if (!loss.grad_enabled()) return;
    loss.grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output.has_grad()) it->fn();
    }
    // Intermediate gradients are not observable after backward; parameters
    // (leaves) keep theirs until the optimizer clears them.
    for (auto& e : entries_) e.output.clear_grad();
    entries_.clear();
  }

 private:
  struct Entry {
    BasicTensor<T> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

namespace detail {
template <typename T>
Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
}  // namespace detail

template <typename T>
Tape<T>* active_tape() {
  return detail::active_tape_slot<T>();
}

/// Makes `tape` the recording tape of this thread for the guard's lifetime.
template <typename T>
class Recording {
 public:
  explicit Recording(Tape<T>& tape) : previous_(detail::active_tape_slot<T>()) {
    detail::active_tape_slot<T>() = &tape;
  }
  ~Recording() { detail::active_tape_slot<T>() = previous_; }
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape<T>* previous_;
};

template <typename T>
void backward(const BasicTensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

}  // namespace xnet
