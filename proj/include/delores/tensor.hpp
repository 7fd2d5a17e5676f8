// Copyright 2026 The delores Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "delores/error.hpp"

namespace delores {

using Shape = std::vector<std::size_t>;

/// Allocator with a fixed 64-byte alignment. Vectorized reductions peel
/// differently depending on the start address, so storage alignment must not
/// vary between runs for results to be bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor with optional gradient accumulator.
///
/// Tensor is a shared handle: copies alias the same storage, which is what the
/// tape needs to route gradients back to parameters. Use clone() for a deep
/// copy and detach() for a copy that does not participate in autodiff.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data.assign(numel_of(impl_->shape), fill);
    set_requires_grad(requires_grad);
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (numel_of(shape) != values.size()) {
      throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                       std::to_string(numel_of(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data.assign(values.begin(), values.end());
    set_requires_grad(requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  /// Copy of the values.
  std::vector<T> values() const { return {impl_->data.begin(), impl_->data.end()}; }

  /// Overwrites the values in place; every handle sees the change.
  void assign(std::span<const T> values) {
    if (values.size() != numel()) {
      throw ShapeError("assign: tensor of shape " + to_string(shape()) + " needs " + std::to_string(numel()) +
                       " values, got " + std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), impl_->data.begin());
  }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }

  void set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) {
      impl_->grad.assign(impl_->data.size(), T(0));
    } else {
      impl_->grad.clear();
      impl_->grad.shrink_to_fit();
    }
  }

  bool has_grad() const { return impl_->requires_grad; }
  // Gradient storage is shared by all handles, so accumulating through a const
  // handle is allowed.
  std::span<T> grad() const { return impl_->grad; }

  void zero_grad() const {
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  /// Same values, fresh storage, not tracked.
  Tensor detach() const { return Tensor(shape(), values()); }

  /// Deep copy including requires_grad flag (gradient reset to zero).
  Tensor clone() const { return Tensor(shape(), values(), requires_grad()); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    AlignedVector<T> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of backward rules for one forward pass.
///
/// Ops append their backward closure after computing their output, so the
/// record is topologically ordered by construction. A tape supports exactly
/// one backward traversal.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_rule) {
    if (consumed_) throw NumericalError("cannot record on a tape that was already backpropagated");
    rules_.push_back(std::move(backward_rule));
  }

  std::size_t size() const { return rules_.size(); }
  bool consumed() const { return consumed_; }

  /// Discards recorded ops and makes the tape reusable.
  void reset() {
    rules_.clear();
    consumed_ = false;
  }

 private:
  template <typename U>
  friend void backward(Tensor<U>& loss, Tape<U>& tape);

  std::vector<std::function<void()>> rules_;
  bool consumed_ = false;
};

/// Populates grads of every requires_grad tensor reachable from `loss`.
/// Gradients accumulate into leaves; call zero_grad() between steps.
template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
  if (tape.consumed_) throw NumericalError("backward called twice on the same tape");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw NumericalError("loss does not depend on any trainable tensor");
  loss.grad()[0] += T(1);
  for (auto it = tape.rules_.rbegin(); it != tape.rules_.rend(); ++it) (*it)();
  tape.rules_.clear();
  tape.consumed_ = true;
}

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (const T v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
  for (auto* t : ts) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

inline void expect_shape(const Shape& actual, const Shape& expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                     to_string(actual));
  }
}

}  // namespace detail
}  // namespace delores
