#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sv/error.hpp"

namespace sv::nn {

struct ShapeMismatch : Error {
  using Error::Error;
};
struct NonFiniteValue : Error {
  using Error::Error;
};

// Dense row-major value container, rank 1..4. Training runs in 64-bit
// floats throughout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // 4-d access (b, c, h, w)
  double& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // 2-d access (i, j)
  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v);
  void zero() { fill(0.0); }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws NonFiniteValue naming `context` if any entry is NaN/inf.
void check_finite(const Tensor& t, const std::string& context);

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const std::string& context);

}  // namespace sv::nn
