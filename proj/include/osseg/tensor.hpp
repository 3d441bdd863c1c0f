#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "osseg/shape.hpp"

namespace osseg {

// Dense row-major container (last axis fastest). Shape is immutable after
// construction; values are freely mutable through data().
template <class T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel(shape_)), fill) {}
  TensorT(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    require(static_cast<std::int64_t>(data_.size()) == numel(shape_),
            "tensor data length does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const TensorT&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <class T>
TensorT<T> zeros_like(const TensorT<T>& t) {
  return TensorT<T>(t.shape());
}

template <class To, class From>
TensorT<To> tensor_cast(const TensorT<From>& t) {
  TensorT<To> out(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

template <class T>
bool all_finite(const TensorT<T>& t) {
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

}  // namespace osseg
