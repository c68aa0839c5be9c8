#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "landscape/error.hpp"

namespace landscape {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major array with an optional same-shape gradient buffer.
// The gradient is allocated on first access through grad().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), values_(numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != numel(shape_)) {
      throw ShapeError("tensor of shape " + to_string(shape_) + " given " + std::to_string(values_.size()) +
                       " values");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  // Flat offset of (n, c, h, w) in a rank-4 tensor.
  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept { return values_[offset(n, c, h, w)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return values_[offset(n, c, h, w)];
  }

  bool has_grad() const noexcept { return grad_ready_; }
  std::span<T> grad() {
    if (!grad_ready_ || grad_.size() != values_.size()) {
      grad_.assign(values_.size(), T{0});
      grad_ready_ = true;
    }
    return grad_;
  }
  std::span<const T> grad() const {
    if (!has_grad()) throw StateError("gradient requested before it was populated");
    return grad_;
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }
  void drop_grad() noexcept {
    grad_.clear();
    grad_ready_ = false;
  }

  void reshape(Shape shape) {
    if (numel(shape) != values_.size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  bool all_finite() const noexcept {
    for (const T v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.values_ == b.values_; }

 private:
  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
  bool grad_ready_ = false;
};

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + to_string(want) + ", got " + to_string(got));
  }
}

}  // namespace landscape
