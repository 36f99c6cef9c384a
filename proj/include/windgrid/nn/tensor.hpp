#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "windgrid/error.hpp"

namespace windgrid::nn {

/// Dense row-major array of doubles with up to four dimensions (batch, channel, height, width).
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 4)
      throw Error(ErrorKind::ShapeError, "tensor rank must be 1..4, got " + std::to_string(shape_.size()));
    data_.assign(product(shape_), fill);
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 4)
      throw Error(ErrorKind::ShapeError, "tensor rank must be 1..4, got " + std::to_string(shape_.size()));
    if (data_.size() != product(shape_))
      throw Error(ErrorKind::ShapeError, "data length " + std::to_string(data_.size()) + " != element count " +
                                             std::to_string(product(shape_)));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (product(shape) != data_.size())
      throw Error(ErrorKind::ShapeError, "cannot reshape " + shape_string() + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  void require_same_shape(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_)
      throw Error(ErrorKind::ShapeError, std::string(op) + ": shape " + shape_string() + " vs " + o.shape_string());
  }

  std::string shape_string() const { return shape_string(shape_); }
  static std::string shape_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
  }

  static std::size_t product(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace windgrid::nn
