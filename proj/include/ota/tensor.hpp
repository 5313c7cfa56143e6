#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "ota/common.hpp"

namespace ota {

// Dense row-major tensor of doubles. Rank is usually 2 (batch x dim);
// rank-1 vectors appear as biases and single points.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count_(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count_(shape_))
      throw DimensionError("tensor data length does not match shape");
  }

  static Tensor matrix(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }

  static Tensor row(std::initializer_list<double> vals) {
    return Tensor({1, vals.size()}, std::vector<double>(vals));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row_span(std::size_t r) {
    return {data_.data() + r * cols(), cols()};
  }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool finite() const { return all_finite(data_); }

 private:
  static std::size_t count_(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// y += a * x, the one loop everything hot reduces to. Written element-wise
// (no cross-iteration dependency) so it vectorizes without -ffast-math.
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const double* __restrict xp = x.data();
  double* __restrict yp = y.data();
  for (std::size_t i = 0; i < n; ++i) yp[i] += a * xp[i];
}

// Four-accumulator dot product; deterministic summation order.
inline double dot(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const double* __restrict xp = x.data();
  const double* __restrict yp = y.data();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += xp[i] * yp[i];
    s1 += xp[i + 1] * yp[i + 1];
    s2 += xp[i + 2] * yp[i + 2];
    s3 += xp[i + 3] * yp[i + 3];
  }
  for (; i < n; ++i) s0 += xp[i] * yp[i];
  return (s0 + s1) + (s2 + s3);
}

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const double* __restrict xp = x.data();
  const double* __restrict yp = y.data();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double d0 = xp[i] - yp[i];
    const double d1 = xp[i + 1] - yp[i + 1];
    const double d2 = xp[i + 2] - yp[i + 2];
    const double d3 = xp[i + 3] - yp[i + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < n; ++i) {
    const double d = xp[i] - yp[i];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

}  // namespace ota
