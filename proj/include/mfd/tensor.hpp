#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfd/error.hpp"
#include "mfd/gemm.hpp"

namespace mfd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

// Dense row-major n-dimensional array. Images and activations use
// channels-last order (batch, H, W, C). A default-constructed tensor is the
// empty placeholder state; every other tensor has rank >= 1 and extents >= 1.
template <class T = double>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    validate(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate(shape_);
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Moves the storage out, leaving the empty placeholder state.
  std::vector<T> release() && {
    shape_.clear();
    return std::move(data_);
  }

  // Contiguous slice along the leading axis.
  std::span<T> slice(std::size_t i) {
    const std::size_t n = data_.size() / shape_[0];
    return std::span<T>(data_).subspan(i * n, n);
  }
  std::span<const T> slice(std::size_t i) const {
    const std::size_t n = data_.size() / shape_[0];
    return std::span<const T>(data_).subspan(i * n, n);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: rank must be >= 1");
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor: zero extent in shape " + to_string(shape));
  }

  Shape shape_;
  std::vector<T> data_;
};

template <class T>
Tensor<T> reshape(const Tensor<T>& t, Shape new_shape) {
  if (shape_size(new_shape) != t.size())
    throw ShapeError("reshape: cannot view " + to_string(t.shape()) + " as " +
                     to_string(new_shape));
  return Tensor<T>(std::move(new_shape), std::vector<T>(t.values().begin(), t.values().end()));
}

template <class T>
Tensor<T> reshape(Tensor<T>&& t, Shape new_shape) {
  if (shape_size(new_shape) != t.size())
    throw ShapeError("reshape: cannot view " + to_string(t.shape()) + " as " +
                     to_string(new_shape));
  return Tensor<T>(std::move(new_shape), std::move(t).release());
}

// (m x k) * (k x p) through the blocked kernel.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: operands must be rank 2, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner extents differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  Tensor<T> out({m, p});
  gemm::gemm(gemm::Trans::no, gemm::Trans::no, m, p, k, a.data(), k, b.data(), p, out.data(), p,
             false);
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& t, T alpha) {
  Tensor<T> out = t;
  for (auto& v : out.values()) v *= alpha;
  return out;
}

}  // namespace mfd
