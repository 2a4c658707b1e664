// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the reverse-mode tape that records how they were
// produced. Tensor is a cheap handle; copies share storage.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "c2w/error.hpp"

namespace c2w::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T v, bool requires_grad = false) { return Tensor(Shape{1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t ndim() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->values.size(); }

  std::span<T> values() { return s_->values; }
  std::span<const T> values() const { return s_->values; }
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  /// Leaf tensors that start requiring grad get a zeroed gradient buffer.
  void set_requires_grad(bool on);
  /// Marks an operation output: requires grad, buffer allocated on first use.
  void mark_requires_grad() { s_->requires_grad = true; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<T> grad() { return s_->grad; }
  std::span<const T> grad() const { return s_->grad; }
  /// Allocates a zero gradient if none exists and returns it. Const because
  /// the handle shares storage with the tape's captured copies.
  std::span<T> ensure_grad() const;
  void zero_grad();
  void drop_grad() { std::vector<T>().swap(s_->grad); }

  /// Deep copy of shape and values; the copy has no gradient.
  Tensor clone() const;
  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Ordered record of backward closures. Operations append in execution order,
/// so every entry's inputs were produced by earlier entries (or are leaves).
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and runs the closures in reverse order.
  /// Throws NotScalar for a non-scalar loss and TapeConsumed on a second call
  /// without reset().
  void backward(Tensor<T>& loss);

  /// Releases all recorded closures (and the activations they hold).
  void reset();

 private:
  std::vector<std::function<void()>> entries_;
  bool recording_;
  bool consumed_ = false;
};

/// True if the tape is recording and any of the tensors requires grad.
template <class T, class... Ts>
bool needs_grad(const Tape<T>& tape, const Ts&... ts) {
  if (!tape.recording()) return false;
  return ((ts.defined() && ts.requires_grad()) || ...);
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace c2w::ad
