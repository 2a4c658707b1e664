// SPDX-License-Identifier: Apache-2.0
#include "c2w/tensor.hpp"

#include <algorithm>

namespace c2w::ad {

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : s_(std::make_shared<Storage>()) {
  for (auto e : shape) {
    if (e == 0) throw Error(ErrorCode::ShapeMismatch, "tensor extents must be positive " + shape_str(shape));
  }
  s_->values.assign(shape_numel(shape), T{});
  s_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) : s_(std::make_shared<Storage>()) {
  if (values.size() != shape_numel(shape) || shape.empty()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::to_string(values.size()) + " values do not fill shape " + shape_str(shape));
  }
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  set_requires_grad(requires_grad);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on tensor of shape " + shape_str(shape()));
  return s_->values[0];
}

template <class T>
void Tensor<T>::set_requires_grad(bool on) {
  s_->requires_grad = on;
  if (on && s_->grad.empty()) s_->grad.assign(s_->values.size(), T{});
}

template <class T>
std::span<T> Tensor<T>::ensure_grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T{});
  return s_->grad;
}

template <class T>
void Tensor<T>::zero_grad() {
  s_->grad.assign(s_->values.size(), T{});
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(s_->shape, s_->values, false);
}

template <class T>
void Tape<T>::record(std::function<void()> backward_fn) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "tape already consumed by backward(); call reset()");
  entries_.push_back(std::move(backward_fn));
}

template <class T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "backward() called twice without reset()");
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward() requires a scalar loss");
  }
  consumed_ = true;
  loss.ensure_grad()[0] = T{1};
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

template <class T>
void Tape<T>::reset() {
  entries_.clear();
  entries_.shrink_to_fit();
  consumed_ = false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace c2w::ad
