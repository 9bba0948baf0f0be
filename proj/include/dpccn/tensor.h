// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_TENSOR_H_
#define DPCCN_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dpccn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Feature maps use the layout
// (batch, channels, frames, bins); sequences use (batch, channels, frames, 1).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4-D element access.
  double& at(std::size_t b, std::size_t c, std::size_t t, std::size_t f) {
    return data_[((b * shape_[1] + c) * shape_[2] + t) * shape_[3] + f];
  }
  double at(std::size_t b, std::size_t c, std::size_t t, std::size_t f) const {
    return data_[((b * shape_[1] + c) * shape_[2] + t) * shape_[3] + f];
  }

  void fill(double v);
  // Same element count required.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace dpccn

#endif  // DPCCN_TENSOR_H_
