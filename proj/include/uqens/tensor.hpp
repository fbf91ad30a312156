#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqens {

/// Thrown when tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a NaN or Inf shows up in an activation or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Cache-line aligned storage. Vectorized kernels choose their summation
/// order from the start address, so a fixed alignment keeps floating-point
/// results identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of doubles. Image batches use B x H x W x C.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor from(std::initializer_list<std::size_t> shape,
                     std::initializer_list<double> values) {
    return Tensor(Shape(shape), std::vector<double>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const Storage& vector() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

  /// Same data, new extents. Element count must not change.
  Tensor reshaped(Shape shape) const;
  void fill(double value);
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  /// Throws NumericError mentioning `where` when a value is NaN or Inf.
  void require_finite(const std::string& where) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Storage data_;
};

}  // namespace uqens
