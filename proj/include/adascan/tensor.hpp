#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "adascan/error.hpp"

namespace adascan {

// While enabled (thread-local), Tensor construction rejects NaN/Inf data.
inline bool& tensor_checked_mode() {
  thread_local bool enabled = false;
  return enabled;
}

// RAII switch for checked construction.
class CheckedTensorScope {
 public:
  CheckedTensorScope() : prev_(tensor_checked_mode()) { tensor_checked_mode() = true; }
  ~CheckedTensorScope() { tensor_checked_mode() = prev_; }
  CheckedTensorScope(const CheckedTensorScope&) = delete;
  CheckedTensorScope& operator=(const CheckedTensorScope&) = delete;

 private:
  bool prev_;
};

// Rank 1 or 2; stored inline so shape handling never allocates.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<std::size_t> dims) {
    require(dims.size() >= 1 && dims.size() <= 2, "Shape: rank must be 1 or 2");
    rank_ = static_cast<std::uint8_t>(dims.size());
    std::size_t i = 0;
    for (std::size_t d : dims) dims_[i++] = d;
  }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }

  std::size_t count() const {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::array<std::size_t, 2> dims_{0, 0};
  std::uint8_t rank_ = 0;
};

// Dense row-major tensor of doubles. Vectors are shape {n}, matrices
// {rows, cols}, scalars shape {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(shape), data_(shape.count(), 0.0) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    require(shape_.count() == data_.size(), "Tensor: shape does not match data length");
    if (tensor_checked_mode()) {
      for (double v : data_) {
        if (!std::isfinite(v)) throw NumericError("Tensor: non-finite value in checked mode");
      }
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::size_t rows() const {
    require(rank() == 2, "Tensor: rows() on non-matrix");
    return shape_[0];
  }
  std::size_t cols() const {
    require(rank() == 2, "Tensor: cols() on non-matrix");
    return shape_[1];
  }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

  bool is_scalar() const { return data_.size() == 1; }
  double item() const {
    require(is_scalar(), "Tensor: item() on non-scalar");
    return data_[0];
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return {data_.data(), data_.size()}; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline double l2_norm(const Tensor& t) {
  double sq = 0.0;
  for (double v : t.data()) sq += v * v;
  return std::sqrt(sq);
}

inline double dot_plain(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "dot_plain: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double linf_diff(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "linf_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace adascan
