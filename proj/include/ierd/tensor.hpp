#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ierd {

/// Extent of a 4-D (batch, channels, height, width) tensor.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
           ", " + std::to_string(w) + ")";
  }
};

/// Dense row-major (n, c, h, w) tensor with value semantics.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{1, 1, 1, 1}, data_(1, T(0)) {}

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape) {
    if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
      throw std::invalid_argument("tensor dimensions must all be >= 1, got " + shape.str());
    }
    data_.assign(shape.numel(), fill);
  }

  BasicTensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : BasicTensor(Shape{n, c, h, w}, fill) {}

  static BasicTensor from_values(Shape shape, std::span<const T> values) {
    BasicTensor t(shape);
    if (values.size() != t.size()) {
      throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                  " does not match shape " + shape.str());
    }
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  /// Pointer to the (h, w) plane of item n, channel c.
  T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const T* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  BasicTensor& operator-=(const BasicTensor& other) {
    require_same_shape(other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }

  friend BasicTensor operator+(BasicTensor a, const BasicTensor& b) { return a += b; }
  friend BasicTensor operator-(BasicTensor a, const BasicTensor& b) { return a -= b; }

  void require_same_shape(const BasicTensor& other, const char* where) const {
    if (!(shape_ == other.shape_)) {
      throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_.str() +
                                  " vs " + other.shape_.str());
    }
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Sum over all elements of a ⊙ b, accumulated in double.
template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  a.require_same_shape(b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace ierd
