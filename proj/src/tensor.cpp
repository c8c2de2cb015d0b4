#include "sv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sv::nn {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 4)
    throw ShapeMismatch("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(n, 0.0);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  Tensor out(std::move(shape));
  if (out.size() != size())
    throw ShapeMismatch("reshape " + shape_str() + " -> " + out.shape_str() +
                        " changes element count");
  std::copy(data_.begin(), data_.end(), out.data_.begin());
  return out;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

void check_finite(const Tensor& t, const std::string& context) {
  const double* p = t.data();
  const std::size_t n = t.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw NonFiniteValue(std::string(context) + ": non-finite value at flat index " +
                           std::to_string(i));
  }
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const std::string& context) {
  if (t.shape() != shape) {
    Tensor want(shape);
    throw ShapeMismatch(std::string(context) + ": expected shape " + want.shape_str() + ", got " +
                        t.shape_str());
  }
}

}  // namespace sv::nn
