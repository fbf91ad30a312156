#include "uqens/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace uqens {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " holds " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
  return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
  return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const std::string& where) const {
  if (!all_finite()) throw NumericError("non-finite value in " + where);
}

}  // namespace uqens
